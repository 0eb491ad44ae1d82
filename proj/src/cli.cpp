#include "kmcex/cli.hpp"

#include "kmcex/analysis.hpp"
#include "kmcex/bench.hpp"
#include "kmcex/io.hpp"
#include "kmcex/verify.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <optional>
#include <ostream>
#include <sstream>

namespace kmcex::cli {

namespace {

namespace fs = std::filesystem;

// Help output is not an error; carries the rendered text to main().
class HelpRequest : public UsageError {
 public:
  using UsageError::UsageError;
};

enum class Kind { Text, Seed, Count, Real, InputFile, InputDir, OutputPath };

struct FlagSpec {
  const char* name;
  Kind kind;
  bool required;
  const char* help;
};

const FlagSpec kSeed{"seed", Kind::Seed, false, "random seed"};
const FlagSpec kMethod{"method", Kind::Text, false, "kkmcex, rrmcex, orrmcex, als or factor_sgd (comma list in sweeps)"};
const FlagSpec kPs{"ps", Kind::Text, false, "percentage of observed entries (comma list in sweeps)"};
const FlagSpec kMu{"mu", Kind::Text, false, "regularization weight (comma list for a grid)"};
const FlagSpec kEta{"eta", Kind::Text, false, "diffusion kernel weight (comma list for a grid)"};
const FlagSpec kRank{"rank", Kind::Count, false, "factor rank"};
const FlagSpec kDim{"dim", Kind::Count, false, "feature dimension"};
const FlagSpec kSnr{"snr", Kind::Real, false, "signal-to-noise ratio of the observations"};
const FlagSpec kEpochs{"epochs", Kind::Count, false, "passes over the observations"};
const FlagSpec kStride{"stride", Kind::Text, false, "trace stride in iterations, or inf"};
const FlagSpec kConfig{"config", Kind::InputFile, true, "experiment configuration file"};

std::vector<FlagSpec> flags_for(Subcommand s) {
  switch (s) {
    case Subcommand::Synth:
      return {{"out", Kind::OutputPath, true, "output directory for F.csv, kx.csv, ky.csv and obs.csv"},
              {"n", Kind::Count, false, "rows (default 50)"},
              {"l", Kind::Count, false, "columns (default 50)"},
              {"graph-p", Kind::Real, false, "edge probability of both graphs (default 0.03)"},
              kEta,
              kPs,
              kSnr,
              kSeed};
    case Subcommand::Fit:
      return {{"data", Kind::InputDir, true, "directory with kx.csv, ky.csv and optionally F.csv"},
              {"obs", Kind::InputFile, false, "observations as i,j,value"},
              {"out", Kind::OutputPath, true, "predicted matrix"},
              {"model", Kind::OutputPath, false, "fitted model"},
              kPs,
              kMethod,
              kMu,
              kRank,
              kDim,
              kEpochs,
              kSnr,
              kSeed};
    case Subcommand::Sweep:
      return {kConfig, {"out", Kind::OutputPath, true, "results CSV"}, kSeed, kMethod, kPs, kMu, kEta, kRank, kDim,
              kSnr, kEpochs};
    case Subcommand::Online:
      return {kConfig, {"out", Kind::OutputPath, true, "trace CSV"}, kSeed, kMethod, kPs, kMu, kEta, kRank, kDim,
              kSnr, kEpochs, kStride};
    case Subcommand::Gridsearch:
      return {kConfig, {"out", Kind::OutputPath, false, "chosen parameters"}, kSeed, kMethod, kPs, kMu, kEta, kRank,
              kDim, kSnr, kEpochs};
    case Subcommand::Verify:
      return {{"out", Kind::OutputPath, false, "per-instance bound report CSV"}, kSeed};
  }
  return {};
}

const std::vector<std::pair<Subcommand, const char*>> kSubcommands = {
    {Subcommand::Synth, "generate a synthetic dataset"},
    {Subcommand::Fit, "fit one estimator and write the completed matrix"},
    {Subcommand::Sweep, "NMSE and timing over sampling percentages"},
    {Subcommand::Online, "online convergence trace"},
    {Subcommand::Verify, "run the estimator error-theory checks"},
    {Subcommand::Gridsearch, "choose mu and eta on a validation split"},
};

void add_flag(CLI::App& app, const FlagSpec& spec, std::map<std::string, std::string>& store) {
  auto* opt = app.add_option_function<std::string>(
      std::string("--") + spec.name, [&store, name = std::string(spec.name)](const std::string& v) { store[name] = v; },
      spec.help);
  opt->type_name(spec.kind == Kind::Count ? "INT" : spec.kind == Kind::Real ? "REAL" : "TEXT");
  if (spec.required) opt->required();
  switch (spec.kind) {
    case Kind::Seed:
      opt->check(CLI::TypeValidator<std::uint64_t>("UINT64"));
      break;
    case Kind::Count:
      opt->check(CLI::TypeValidator<long long>("INT") & CLI::NonNegativeNumber);
      break;
    case Kind::Real:
      opt->check(CLI::Number);
      break;
    case Kind::InputFile:
      opt->check(CLI::ExistingFile);
      break;
    case Kind::InputDir:
      opt->check(CLI::ExistingDirectory);
      break;
    case Kind::OutputPath:
      opt->check(CLI::Validator(
          [](std::string& path) -> std::string {
            const fs::path parent = fs::path(path).parent_path();
            if (path.empty()) return "empty path";
            if (!parent.empty() && !fs::is_directory(parent))
              return "directory '" + parent.string() + "' does not exist";
            return {};
          },
          "PATH"));
      break;
    case Kind::Text:
      break;
  }
}

double flag_number(const CliInvocation& inv, const std::string& flag, double fallback) {
  if (!inv.has(flag)) return fallback;
  try {
    return io::parse_number(inv.get(flag));
  } catch (const InvalidInput&) {
    throw UsageError("--" + flag + ": '" + inv.get(flag) + "' is not a number");
  }
}

Index flag_count(const CliInvocation& inv, const std::string& flag, Index fallback) {
  return inv.has(flag) ? static_cast<Index>(std::stoll(inv.get(flag))) : fallback;
}

std::uint64_t flag_seed(const CliInvocation& inv) {
  return inv.has("seed") ? static_cast<std::uint64_t>(std::stoull(inv.get("seed"))) : 0;
}

NoiseSpec noise_from(const CliInvocation& inv, std::uint64_t seed) {
  const double snr = flag_number(inv, "snr", 0.0);
  if (snr < 0.0) throw UsageError("--snr: must be nonnegative");
  return snr > 0.0 ? NoiseSpec::target_snr(snr, seed) : NoiseSpec::none();
}

SamplingSet sample_percentage(const CliInvocation& inv, Index n, Index l, std::uint64_t seed) {
  const double ps = flag_number(inv, "ps", 0.0);
  if (!(ps > 0.0 && ps <= 100.0)) throw UsageError("--ps: must lie in (0, 100]");
  const Index count = static_cast<Index>(std::llround(ps / 100.0 * static_cast<double>(n * l)));
  if (count < 1) throw UsageError("--ps: yields no observed entries");
  return uniform_sample(n, l, count, seed);
}

bench::ExperimentConfig config_with_overrides(const CliInvocation& inv) {
  auto config = bench::load_config(inv.get("config"));
  const std::vector<std::pair<const char*, const char*>> keys = {
      {"seed", "seed"}, {"method", "methods"}, {"ps", "ps"},     {"mu", "mu"},         {"eta", "eta"},
      {"rank", "rank"}, {"dim", "dim"},        {"snr", "snr"},   {"epochs", "epochs"}, {"stride", "stride"}};
  for (const auto& [flag, key] : keys) {
    if (!inv.has(flag)) continue;
    try {
      config.set(key, inv.get(flag));
    } catch (const InvalidInput& e) {
      throw UsageError(std::string("--") + flag + ": " + e.what());
    }
  }
  if (inv.has("snr")) config.noise_variance = 0.0;
  config.validate();
  return config;
}

int run_synth(const CliInvocation& inv, std::ostream& out) {
  const std::uint64_t seed = flag_seed(inv);
  const Index n = flag_count(inv, "n", 50);
  const Index l = flag_count(inv, "l", 50);
  const double eta = flag_number(inv, "eta", 1.0);
  const auto data = bench::generate_synthetic(n, l, flag_number(inv, "graph-p", 0.03), eta, seed);
  const fs::path dir = inv.get("out");
  fs::create_directories(dir);
  io::save_matrix_csv((dir / "F.csv").string(), data.f);
  io::save_matrix_csv((dir / "kx.csv").string(), data.kx.matrix());
  io::save_matrix_csv((dir / "ky.csv").string(), data.ky.matrix());
  if (inv.has("ps")) {
    const SamplingSet s = sample_percentage(inv, n, l, detail::mix_seed(seed, 1));
    io::save_triplets_csv((dir / "obs.csv").string(), observe(data.f, s, noise_from(inv, detail::mix_seed(seed, 2))));
  }
  out << "wrote " << data.provenance << " to " << dir.string() << '\n';
  return 0;
}

int run_fit(const CliInvocation& inv, std::ostream& out) {
  const fs::path dir = inv.get("data");
  const KernelMatrix<double> kx(io::load_matrix_csv((dir / "kx.csv").string()));
  const KernelMatrix<double> ky(io::load_matrix_csv((dir / "ky.csv").string()));
  const Index n = kx.side();
  const Index l = ky.side();
  const std::uint64_t seed = flag_seed(inv);
  const fs::path truth_path = dir / "F.csv";
  std::optional<Matrix<double>> truth;
  if (fs::exists(truth_path)) {
    truth = io::load_matrix_csv(truth_path.string());
    detail::require(truth->rows() == n && truth->cols() == l, "F.csv shape differs from the kernels");
  }

  std::optional<ObservationSet<double>> obs;
  if (inv.has("obs")) {
    obs = io::load_triplets_csv(inv.get("obs"), n, l);
  } else {
    if (!inv.has("ps")) throw UsageError("--obs or --ps is required");
    if (!truth) throw UsageError("--ps: sampling needs F.csv in the data directory");
    obs = observe(*truth, sample_percentage(inv, n, l, detail::mix_seed(seed, 1)),
                  noise_from(inv, detail::mix_seed(seed, 2)));
  }

  const bench::Method method = inv.has("method") ? bench::parse_method(inv.get("method")) : bench::Method::Kkmcex;
  const double mu = flag_number(inv, "mu", 1.0);
  detail::require_mu(mu);
  const Index rank = flag_count(inv, "rank", 10);
  const Index dim = std::min(flag_count(inv, "dim", 250), n * l);
  const Index epochs = flag_count(inv, "epochs", 20);

  std::ostringstream model_text;
  Matrix<double> estimate;
  switch (method) {
    case bench::Method::Kkmcex: {
      const auto model = kkmcex_fit(std::make_shared<const KroneckerKernel<double>>(kx, ky), *obs, mu);
      estimate = kkmcex_predict(model);
      io::write_model(model_text, model);
      break;
    }
    case bench::Method::Rrmcex:
    case bench::Method::Orrmcex: {
      auto fm = std::make_shared<const FeatureMap<double>>(features_from_eig(kx, ky, dim));
      RrmcexModel<double> model;
      if (method == bench::Method::Rrmcex) {
        model = rrmcex_fit(fm, *obs, mu);
      } else {
        OnlineOptions<double> opt;
        opt.schedule = bench::default_online_schedule(*fm, obs->sampling);
        opt.mu = mu;
        opt.epochs = epochs;
        opt.seed = seed;
        model = orrmcex_run(fm, *obs, opt);
      }
      estimate = rrmcex_predict(model);
      io::write_model(model_text, model);
      break;
    }
    case bench::Method::Als:
    case bench::Method::FactorSgd: {
      FactorModel<double> model;
      if (method == bench::Method::Als) {
        AlsOptions opt;
        opt.rank = rank;
        opt.mu = mu;
        opt.seed = seed;
        model = als_fit(*obs, kx, ky, opt);
      } else {
        FactorSgdOptions opt;
        opt.rank = rank;
        opt.mu = mu;
        opt.epochs = epochs;
        opt.seed = seed;
        opt.schedule = bench::default_factor_schedule(*obs, rank, mu);
        model = factor_sgd_fit<double>(*obs, opt, bench::data_scaled_factors(*obs, rank, seed));
      }
      estimate = factor_predict(model);
      io::write_model(model_text, model);
      break;
    }
  }
  io::save_matrix_csv(inv.get("out"), estimate);
  if (inv.has("model")) {
    auto f = io::open_output(inv.get("model"));
    f << model_text.str();
  }
  out << "method=" << bench::to_string(method) << " S=" << obs->size() << " mu=" << io::format_number(mu);
  if (truth) out << " nmse=" << io::format_number(nmse(estimate, *truth));
  out << '\n';
  return 0;
}

int run_sweep_cmd(const CliInvocation& inv, std::ostream& out, std::ostream& err) {
  const auto config = config_with_overrides(inv);
  const auto data = bench::load_dataset(config);
  err << "dataset " << data.provenance << " (" << data.n_rows() << "x" << data.n_cols() << ", kernels "
      << io::format_number(data.kernel_seconds) << " s)\n";
  bench::SweepOptions options;
  options.progress = [&err](const bench::ResultRow& r) {
    err << bench::to_string(r.method) << " P_s=" << io::format_number(r.ps) << " r=" << r.realization + 1
        << " nmse=" << io::format_number(r.nmse) << '\n';
  };
  const auto result = bench::run_sweep(config, data, options);
  auto f = io::open_output(inv.get("out"));
  bench::write_results_csv(f, result);
  out << "method,P_s,nmse,seconds,mu,eta\n";
  for (const auto& s : result.summary)
    out << bench::to_string(s.method) << ',' << io::format_number(s.ps) << ',' << io::format_number(s.nmse) << ','
        << io::format_number(s.seconds) << ',' << io::format_number(s.mu) << ','
        << (s.eta ? io::format_number(*s.eta) : std::string()) << '\n';
  return 0;
}

int run_online_cmd(const CliInvocation& inv, std::ostream& out) {
  const auto config = config_with_overrides(inv);
  const auto data = bench::load_dataset(config);
  const auto trace = bench::run_online(config, data);
  auto f = io::open_output(inv.get("out"));
  bench::write_trace_csv(f, trace);
  const auto& last = trace.points.back();
  out << bench::to_string(trace.method) << " mu=" << io::format_number(trace.mu) << " iterations=" << last.iteration
      << " nmse=" << io::format_number(last.nmse) << '\n';
  return 0;
}

int run_gridsearch_cmd(const CliInvocation& inv, std::ostream& out) {
  const auto config = config_with_overrides(inv);
  const auto data = bench::load_dataset(config);
  const auto choice = bench::grid_search(config, data, config.validation_fraction);
  std::ostringstream text;
  text << "method,mu,eta,score\n"
       << bench::to_string(config.methods.front()) << ',' << io::format_number(choice.mu) << ','
       << (data.tunable_eta() ? io::format_number(choice.eta) : std::string()) << ','
       << io::format_number(choice.score) << '\n';
  if (inv.has("out")) {
    auto f = io::open_output(inv.get("out"));
    f << text.str();
  } else {
    out << text.str();
  }
  return 0;
}

int run_verify_cmd(const CliInvocation& inv, std::ostream& out) {
  VerifyOptions options;
  options.seed = flag_seed(inv);
  const auto report = run_verify(options);
  for (const auto& c : report.checks)
    out << (c.passed ? "PASS " : "FAIL ") << c.name << " instances=" << c.instances << " failures=" << c.failures
        << " (" << c.detail << ")\n";
  out << report.checks.size() - static_cast<std::size_t>(report.failures()) << "/" << report.checks.size()
      << " checks passed\n";
  if (inv.has("out")) {
    auto f = io::open_output(inv.get("out"));
    write_report_csv(f, report);
  }
  return report.passed() ? 0 : 2;
}

}  // namespace

const char* to_string(Subcommand s) {
  switch (s) {
    case Subcommand::Synth:
      return "synth";
    case Subcommand::Fit:
      return "fit";
    case Subcommand::Sweep:
      return "sweep";
    case Subcommand::Online:
      return "online";
    case Subcommand::Verify:
      return "verify";
    case Subcommand::Gridsearch:
      return "gridsearch";
  }
  return "verify";
}

const std::string& CliInvocation::get(const std::string& flag) const {
  const auto it = flags.find(flag);
  if (it == flags.end()) throw UsageError("--" + flag + " is required");
  return it->second;
}

CliInvocation parse_args(const std::vector<std::string>& args) {
  CLI::App app{"Kernel-based matrix completion and extrapolation", "kmcex"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every subcommand");
  std::map<Subcommand, std::map<std::string, std::string>> stores;
  std::map<Subcommand, CLI::App*> subs;
  for (const auto& [s, description] : kSubcommands) {
    CLI::App* sub = app.add_subcommand(to_string(s), description);
    for (const auto& spec : flags_for(s)) add_flag(*sub, spec, stores[s]);
    subs[s] = sub;
  }
  subs[Subcommand::Fit]->get_option("--obs")->excludes(subs[Subcommand::Fit]->get_option("--ps"));

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    const CLI::App* target = &app;
    for (const auto& [s, sub] : subs)
      if (sub->parsed()) target = sub;
    throw HelpRequest(target->help());
  } catch (const CLI::CallForAllHelp&) {
    throw HelpRequest(app.help("", CLI::AppFormatMode::All));
  } catch (const CLI::ParseError& e) {
    throw UsageError(e.what());
  }
  CliInvocation inv;
  for (const auto& [s, sub] : subs)
    if (sub->parsed()) {
      inv.subcommand = s;
      inv.flags = stores[s];
    }
  return inv;
}

int run(const CliInvocation& invocation, std::ostream& out, std::ostream& err) {
  switch (invocation.subcommand) {
    case Subcommand::Synth:
      return run_synth(invocation, out);
    case Subcommand::Fit:
      return run_fit(invocation, out);
    case Subcommand::Sweep:
      return run_sweep_cmd(invocation, out, err);
    case Subcommand::Online:
      return run_online_cmd(invocation, out);
    case Subcommand::Verify:
      return run_verify_cmd(invocation, out);
    case Subcommand::Gridsearch:
      return run_gridsearch_cmd(invocation, out);
  }
  return 1;
}

int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  try {
    const std::vector<std::string> args(argv + 1, argv + argc);
    return run(parse_args(args), out, err);
  } catch (const HelpRequest& h) {
    out << h.what();
    return 0;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\nrun with --help for the flag list\n";
    return 1;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace kmcex::cli
