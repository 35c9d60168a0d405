// vpe_lab: runs the built-in verified phase estimation experiments.
//
// Exit codes: 0 success, 1 configuration or usage error, 2 runtime failure.

#include "vpe/config.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>

using namespace vpe;
namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0, kConfigError = 1, kRuntimeError = 2;

const char* kSchemaHelp = R"(config schema (JSON object, unknown keys rejected):
  experiment   string   preset name from `vpe_lab list-experiments`, or "custom"
  plan         object   field-by-field overrides of the preset plan:
      kind system noise rates replicates seed shots post basis_flip z_quarter mask
      compensate_bias include_tomography include_floor threads t_points
      optimizer{kind,max_evaluations,initial_step,x_tolerance,f_tolerance}
      shot_counts trials fixed_rate
  out          string   output directory (default ".")
  svg          bool     also write a log-log SVG plot
see docs/config.md for types and defaults.
)";

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::string> out;
  bool svg = false;
  std::optional<std::string> mode;
  std::optional<long long> shots;
};

void add_override_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--seed", o.seed, "root seed");
  cmd->add_option("--threads", o.threads, "worker threads (default: VPE_LAB_THREADS or all cores)")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_flag("--svg", o.svg, "also write an SVG plot");
  cmd->add_option("--mode", o.mode, "estimation mode")->check(CLI::IsMember({"exact", "sampled"}));
  cmd->add_option("--shots", o.shots, "shots per circuit in sampled mode")->check(CLI::PositiveNumber);
}

void apply_overrides(RunConfig& cfg, const Overrides& o) {
  if (o.seed) cfg.plan.seed = *o.seed;
  if (o.threads) cfg.plan.threads = *o.threads;
  if (o.out) cfg.out_dir = *o.out;
  if (o.svg) cfg.svg = true;
  if (o.shots) cfg.plan.shots = *o.shots;
  if (o.mode == "exact") cfg.plan.shots = 0;
  if (o.mode == "sampled" && cfg.plan.shots <= 0) throw ConfigError("--mode: sampled mode needs --shots or plan.shots > 0");
  validate_plan(cfg.plan);
}

void print_summary(std::ostream& os, const SweepResult& r) {
  const bool sampling = r.name.ends_with("-sampling");
  os << r.name << ": " << r.records.size() << " records, " << r.failures() << " failed\n";
  char line[160];
  std::snprintf(line, sizeof line, "%-28s %12s %6s %14s %14s\n", "estimator", sampling ? "shots" : "rate", "n", "rms",
                "median");
  os << line;
  for (const auto& row : r.aggregates()) {
    std::snprintf(line, sizeof line, "%-28s %12.4g %6zu %14.6g %14.6g\n", row.estimator.c_str(), row.rate, row.count,
                  row.rms, row.median);
    os << line;
  }
  for (const auto& e : r.estimator_order) {
    const auto fit = fit_slope(r, e, sampling ? Statistic::Median : Statistic::Rms);
    if (fit.valid()) os << "slope " << e << ": " << format_number(fit.slope) << " over " << fit.points << " points\n";
    else os << "slope " << e << ": not enough points above the floor\n";
  }
}

void write_failures(const fs::path& path, const SweepResult& r) {
  std::ofstream f(path);
  for (const auto& rec : r.records)
    if (rec.failed()) f << format_number(rec.rate) << ',' << rec.replicate << ',' << rec.estimator << ": " << rec.failure << '\n';
}

int cmd_run(const std::string& config_path, const Overrides& o) {
  RunConfig cfg;
  try {
    cfg = load_run_config(config_path);
    apply_overrides(cfg, o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n' << kSchemaHelp;
    return kConfigError;
  }
  try {
    const auto result = run_experiment(cfg.plan);
    const fs::path dir(cfg.out_dir);
    fs::create_directories(dir);
    const auto csv = dir / (cfg.experiment + ".csv");
    {
      std::ofstream f(csv);
      if (!f) throw std::runtime_error(csv.string() + ": cannot open for writing");
      write_csv(f, result);
      if (!f) throw std::runtime_error(csv.string() + ": write failed");
    }
    {
      std::ofstream f(dir / (cfg.experiment + ".config.json"));
      f << nlohmann::json{{"experiment", cfg.experiment}, {"plan", plan_to_json(cfg.plan)}}.dump(2) << '\n';
    }
    if (result.failures() > 0) write_failures(dir / (cfg.experiment + ".failures.txt"), result);
    if (cfg.svg) {
      const auto svg = dir / (cfg.experiment + ".svg");
      std::ofstream f(svg);
      if (!f) throw std::runtime_error(svg.string() + ": cannot open for writing");
      write_svg(f, result, cfg.plan.kind == ExperimentKind::SamplingConvergence ? "shots per circuit" : "error rate");
    }
    print_summary(std::cout, result);
    std::cout << "wrote " << csv.string() << '\n';
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kOk;
}

int cmd_validate(const std::string& config_path, const Overrides& o) {
  try {
    auto cfg = load_run_config(config_path);
    apply_overrides(cfg, o);
    std::cout << "ok: " << cfg.experiment << " (" << enum_name(cfg.plan.kind) << ", " << enum_name(cfg.plan.system)
              << ")\n";
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n' << kSchemaHelp;
    return kConfigError;
  }
  return kOk;
}

int cmd_list(bool verbose) {
  for (const auto& p : builtin_presets()) {
    std::cout << p.name << "  " << p.description << '\n';
    if (verbose) std::cout << plan_to_json(p.plan).dump(2) << '\n';
  }
  return kOk;
}

std::string join_spectrum(const RealVector& v) {
  std::string s;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double x = std::abs(v(i)) < 1e-10 ? 0.0 : std::round(v(i) * 1e10) / 1e10;
    s += (i ? " " : "") + format_number(x);
  }
  return s;
}

int cmd_oracle(const std::string& path) {
  LoadedHamiltonian h;
  try {
    h = load_hamiltonian_file(path);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  }
  try {
    if (const auto* f = std::get_if<FermionOperator>(&h)) {
      std::cout << "modes " << f->num_modes() << '\n';
      bool quadratic = true;
      for (const auto& [k, c] : f->terms())
        if (!k.empty() && !(k.size() == 2 && k[0].dagger && !k[1].dagger)) quadratic = false;
      if (quadratic) {
        const auto d = diagonalize_quadratic(f->one_body_matrix());
        std::cout << "single-particle eigenvalues: " << join_spectrum(d.energies) << '\n';
      }
    } else {
      std::cout << "qubits " << std::get<PauliSum>(h).num_qubits() << '\n';
    }
    const Matrix m = qubit_operator(h).to_matrix();
    const RealVector spectrum = Eigen::SelfAdjointEigenSolver<Matrix>(m, Eigen::EigenvaluesOnly).eigenvalues();
    std::cout << "spectrum: " << join_spectrum(spectrum) << '\n';
    std::cout << "ground energy: " << format_number(spectrum(0)) << '\n';
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"verified phase estimation experiments"};
  app.require_subcommand(1);

  std::string config_path, ham_path;
  Overrides run_o, validate_o;
  bool verbose = false;

  auto* run = app.add_subcommand("run", "execute a config and write CSV (and optional SVG)");
  run->add_option("config", config_path, "JSON config file")->required();
  add_override_flags(run, run_o);

  auto* validate = app.add_subcommand("validate", "check a config without running it");
  validate->add_option("config", config_path, "JSON config file")->required();
  add_override_flags(validate, validate_o);

  auto* list = app.add_subcommand("list-experiments", "print the built-in experiment presets");
  list->add_flag("-v,--verbose", verbose, "also print each preset plan as JSON");

  auto* oracle = app.add_subcommand("oracle", "print the dense spectrum of a Hamiltonian file");
  oracle->add_option("hamiltonian", ham_path, "Hamiltonian file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << kSchemaHelp;
    return kConfigError;
  }

  if (*run) return cmd_run(config_path, run_o);
  if (*validate) return cmd_validate(config_path, validate_o);
  if (*list) return cmd_list(verbose);
  if (*oracle) return cmd_oracle(ham_path);
  return kConfigError;
}
