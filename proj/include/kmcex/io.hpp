#pragma once

// CSV formats. Numbers are written in shortest round-trip form, so a write
// followed by a read reproduces every double bit for bit. Entry indices in
// files are one-based.
//
//   dense matrix      one row per line, comma separated, no header
//   observations      i,j,value
//   sampling set      i,j
//   feature map       header "N=..,L=..,d=..,provenance=.." then NL rows of d values

#include "kmcex/kernels.hpp"
#include "kmcex/sampling.hpp"
#include "kmcex/solvers.hpp"

#include <fstream>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace kmcex::io {

/// Malformed file content; the message names the file and line.
class ParseError : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

std::string format_number(double value);
double parse_number(std::string_view text);

/// Splits on commas and trims surrounding blanks from every field.
std::vector<std::string_view> split_fields(std::string_view line);

Matrix<double> read_matrix_csv(std::istream& in, const std::string& source = "<stream>");
void write_matrix_csv(std::ostream& out, const Matrix<double>& m);
Matrix<double> load_matrix_csv(const std::string& path);
void save_matrix_csv(const std::string& path, const Matrix<double>& m);

ObservationSet<double> read_triplets_csv(std::istream& in, Index n_rows, Index n_cols,
                                         const std::string& source = "<stream>");
void write_triplets_csv(std::ostream& out, const ObservationSet<double>& obs);
ObservationSet<double> load_triplets_csv(const std::string& path, Index n_rows, Index n_cols);
void save_triplets_csv(const std::string& path, const ObservationSet<double>& obs);

SamplingSet read_sampling_csv(std::istream& in, Index n_rows, Index n_cols, const std::string& source = "<stream>");
void write_sampling_csv(std::ostream& out, const SamplingSet& s);

FeatureMap<double> read_feature_map_csv(std::istream& in, const std::string& source = "<stream>");
void write_feature_map_csv(std::ostream& out, const FeatureMap<double>& f);

/// Model bundles: one metadata header line followed by coefficient rows.
///   kkmcex  "model=kkmcex,N=..,L=..,S=..,mu=.."  then i,j,coefficient
///   rrmcex  "model=rrmcex,N=..,L=..,d=..,mu=.."  then one xi value per line
///   factor  "model=factor,N=..,L=..,p=..,mu=.."  then N rows of W, then L rows of H
void write_model(std::ostream& out, const KkmcexModel<double>& model);
void write_model(std::ostream& out, const RrmcexModel<double>& model);
void write_model(std::ostream& out, const FactorModel<double>& model);

/// Parses "key=value,key=value" headers.
std::vector<std::pair<std::string, std::string>> parse_header(std::string_view line, const std::string& source);

/// Opens a file for writing or throws InvalidInput naming the path.
std::ofstream open_output(const std::string& path);
std::ifstream open_input(const std::string& path);

}  // namespace kmcex::io
