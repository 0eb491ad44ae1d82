#include "kmcex/io.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>

namespace kmcex::io {

namespace {

std::string where(const std::string& source, std::size_t line) {
  return source + ":" + std::to_string(line) + ": ";
}

std::string_view trim(std::string_view s) {
  const auto blank = [](char c) { return c == ' ' || c == '\t' || c == '\r'; };
  while (!s.empty() && blank(s.front())) s.remove_prefix(1);
  while (!s.empty() && blank(s.back())) s.remove_suffix(1);
  return s;
}

Index parse_index(std::string_view text, Index upper, const std::string& at, const char* what) {
  Index v = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ParseError(at + "invalid " + what + " index '" + std::string(text) + "'");
  if (v < 1 || v > upper)
    throw IndexError(at + what + " index " + std::to_string(v) + " outside 1.." + std::to_string(upper));
  return v - 1;
}

// Reads non-blank lines, handing (line number, content) to `fn`.
template <typename Fn>
void for_each_line(std::istream& in, Fn&& fn) {
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto content = trim(line);
    if (content.empty()) continue;
    fn(number, content);
  }
}

double field_number(std::string_view text, const std::string& at) {
  try {
    return parse_number(text);
  } catch (const InvalidInput& e) {
    throw ParseError(at + e.what());
  }
}

}  // namespace

std::string format_number(double value) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) throw NumericalError("format_number: conversion failed");
  return std::string(buf, ptr);
}

double parse_number(std::string_view text) {
  text = trim(text);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double v = 0.0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (text.empty() || ec != std::errc() || ptr != end) throw InvalidInput("invalid number '" + std::string(text) + "'");
  return v;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot open '" + path + "' for writing");
  return out;
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open '" + path + "' for reading");
  return in;
}

Matrix<double> read_matrix_csv(std::istream& in, const std::string& source) {
  std::vector<double> values;
  Index cols = -1;
  Index rows = 0;
  for_each_line(in, [&](std::size_t number, std::string_view line) {
    const auto fields = split_fields(line);
    const auto at = where(source, number);
    if (cols < 0) cols = static_cast<Index>(fields.size());
    if (static_cast<Index>(fields.size()) != cols)
      throw ParseError(at + "expected " + std::to_string(cols) + " fields, found " + std::to_string(fields.size()));
    for (auto f : fields) values.push_back(field_number(f, at));
    ++rows;
  });
  if (rows == 0) throw ParseError(source + ": empty matrix file");
  return Eigen::Map<const RowMajorMatrix<double>>(values.data(), rows, cols);
}

void write_matrix_csv(std::ostream& out, const Matrix<double>& m) {
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j > 0) out << ',';
      out << format_number(m(i, j));
    }
    out << '\n';
  }
}

Matrix<double> load_matrix_csv(const std::string& path) {
  auto in = open_input(path);
  return read_matrix_csv(in, path);
}

void save_matrix_csv(const std::string& path, const Matrix<double>& m) {
  auto out = open_output(path);
  write_matrix_csv(out, m);
}

ObservationSet<double> read_triplets_csv(std::istream& in, Index n_rows, Index n_cols, const std::string& source) {
  detail::require(n_rows >= 1 && n_cols >= 1, "read_triplets_csv: dimensions must be positive");
  std::vector<Entry> entries;
  std::vector<double> values;
  std::vector<std::size_t> lines;
  for_each_line(in, [&](std::size_t number, std::string_view line) {
    const auto at = where(source, number);
    const auto fields = split_fields(line);
    if (fields.size() != 3) throw ParseError(at + "expected i,j,value");
    entries.push_back({parse_index(fields[0], n_rows, at, "row"), parse_index(fields[1], n_cols, at, "column")});
    values.push_back(field_number(fields[2], at));
    lines.push_back(number);
  });
  std::vector<std::size_t> first(static_cast<std::size_t>(n_rows * n_cols), 0);
  for (std::size_t k = 0; k < entries.size(); ++k) {
    auto& seen = first[static_cast<std::size_t>(entries[k].col * n_rows + entries[k].row)];
    if (seen != 0)
      throw ParseError(where(source, lines[k]) + "duplicate entry (" + std::to_string(entries[k].row + 1) + ", " +
                       std::to_string(entries[k].col + 1) + "), first seen on line " + std::to_string(seen));
    seen = lines[k];
  }
  Vector<double> v = Eigen::Map<const Vector<double>>(values.data(), static_cast<Index>(values.size()));
  return ObservationSet<double>(SamplingSet(n_rows, n_cols, std::move(entries)), std::move(v));
}

void write_triplets_csv(std::ostream& out, const ObservationSet<double>& obs) {
  for (Index k = 0; k < obs.size(); ++k)
    out << obs.sampling[k].row + 1 << ',' << obs.sampling[k].col + 1 << ',' << format_number(obs.values(k)) << '\n';
}

ObservationSet<double> load_triplets_csv(const std::string& path, Index n_rows, Index n_cols) {
  auto in = open_input(path);
  return read_triplets_csv(in, n_rows, n_cols, path);
}

void save_triplets_csv(const std::string& path, const ObservationSet<double>& obs) {
  auto out = open_output(path);
  write_triplets_csv(out, obs);
}

SamplingSet read_sampling_csv(std::istream& in, Index n_rows, Index n_cols, const std::string& source) {
  std::vector<Entry> entries;
  for_each_line(in, [&](std::size_t number, std::string_view line) {
    const auto at = where(source, number);
    const auto fields = split_fields(line);
    if (fields.size() != 2) throw ParseError(at + "expected i,j");
    entries.push_back({parse_index(fields[0], n_rows, at, "row"), parse_index(fields[1], n_cols, at, "column")});
  });
  return SamplingSet(n_rows, n_cols, std::move(entries));
}

void write_sampling_csv(std::ostream& out, const SamplingSet& s) {
  for (const auto& e : s.entries()) out << e.row + 1 << ',' << e.col + 1 << '\n';
}

std::vector<std::pair<std::string, std::string>> parse_header(std::string_view line, const std::string& source) {
  std::vector<std::pair<std::string, std::string>> out;
  for (auto field : split_fields(line)) {
    const auto eq = field.find('=');
    if (eq == std::string_view::npos || eq == 0)
      throw ParseError(source + ": malformed header field '" + std::string(field) + "'");
    out.emplace_back(std::string(trim(field.substr(0, eq))), std::string(trim(field.substr(eq + 1))));
  }
  return out;
}

FeatureMap<double> read_feature_map_csv(std::istream& in, const std::string& source) {
  std::string header;
  std::size_t number = 0;
  while (std::getline(in, header)) {
    ++number;
    if (!trim(header).empty()) break;
  }
  if (trim(header).empty()) throw ParseError(source + ": missing feature map header");
  Index n = -1, l = -1, d = -1;
  std::string provenance;
  for (const auto& [key, value] : parse_header(trim(header), source)) {
    const auto at = where(source, number);
    auto as_index = [&](const std::string& v) {
      Index out = 0;
      const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
      if (ec != std::errc() || ptr != v.data() + v.size() || out < 1)
        throw ParseError(at + "invalid value for " + key);
      return out;
    };
    if (key == "N") n = as_index(value);
    else if (key == "L") l = as_index(value);
    else if (key == "d") d = as_index(value);
    else if (key == "provenance") provenance = value;
    else throw ParseError(at + "unknown header key '" + key + "'");
  }
  if (n < 0 || l < 0 || d < 0 || provenance.empty()) throw ParseError(source + ": header must define N, L, d and provenance");
  FeatureProvenance p{};
  try {
    p = parse_provenance(provenance);
  } catch (const InvalidInput& e) {
    throw ParseError(source + ": " + e.what());
  }
  RowMajorMatrix<double> phi(n * l, d);
  Index row = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++number;
    const auto content = trim(line);
    if (content.empty()) continue;
    const auto at = where(source, number);
    const auto fields = split_fields(content);
    if (static_cast<Index>(fields.size()) != d) throw ParseError(at + "expected " + std::to_string(d) + " fields");
    if (row >= n * l) throw ParseError(at + "more than N L feature rows");
    for (Index c = 0; c < d; ++c) phi(row, c) = field_number(fields[static_cast<std::size_t>(c)], at);
    ++row;
  }
  if (row != n * l) throw ParseError(source + ": expected " + std::to_string(n * l) + " feature rows, found " + std::to_string(row));
  return FeatureMap<double>(n, l, std::move(phi), p);
}

void write_feature_map_csv(std::ostream& out, const FeatureMap<double>& f) {
  out << "N=" << f.n_rows() << ",L=" << f.n_cols() << ",d=" << f.dim() << ",provenance=" << to_string(f.provenance())
      << '\n';
  write_matrix_csv(out, f.phi());
}

void write_model(std::ostream& out, const KkmcexModel<double>& model) {
  out << "model=kkmcex,N=" << model.kernel->n_rows() << ",L=" << model.kernel->n_cols()
      << ",S=" << model.sampling.size() << ",mu=" << format_number(model.mu) << '\n';
  for (Index k = 0; k < model.sampling.size(); ++k)
    out << model.sampling[k].row + 1 << ',' << model.sampling[k].col + 1 << ',' << format_number(model.dual_coeffs(k))
        << '\n';
}

void write_model(std::ostream& out, const RrmcexModel<double>& model) {
  out << "model=rrmcex,N=" << model.features->n_rows() << ",L=" << model.features->n_cols()
      << ",d=" << model.features->dim() << ",mu=" << format_number(model.mu) << '\n';
  for (Index c = 0; c < model.xi.size(); ++c) out << format_number(model.xi(c)) << '\n';
}

void write_model(std::ostream& out, const FactorModel<double>& model) {
  out << "model=factor,N=" << model.w.rows() << ",L=" << model.h.rows() << ",p=" << model.rank()
      << ",mu=" << format_number(model.mu) << '\n';
  write_matrix_csv(out, model.w);
  write_matrix_csv(out, model.h);
}

}  // namespace kmcex::io
