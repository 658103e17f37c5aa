// Command-line front end: single experiments, the benchmark grid, the wine
// regression comparison, the high-dimensional Michalewicz study, plotting and
// the finite-difference suite.

#include "diffmeta/gradsuite.hpp"
#include "diffmeta/harness.hpp"

#include <CLI11.hpp>
#include <fmt/core.h>

#include <chrono>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

using namespace diffmeta;

namespace {

struct Common {
  std::string config;
  int runs = -1;  // <0 keeps the preset value
  std::uint64_t seed = 0;
  std::string output;
  int threads = 0;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--runs", c.runs, "Independent runs per configuration")->check(CLI::PositiveNumber);
  app->add_option("--seed", c.seed, "Base seed; run i uses seed + i")->capture_default_str();
  app->add_option("--output", c.output, "Output directory (default: $DIFFMETA_OUT or ./results)");
  app->add_option("--threads", c.threads, "Worker threads, 0 = hardware concurrency")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  app->add_option("--config", c.config, "Flat key=value file using the long flag names; flags override it")
      ->check(CLI::ExistingFile);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

// Feeds key=value lines into options the command line left unset. Blank
// lines and lines starting with '#' are skipped.
void apply_config_file(CLI::App* app, const std::string& path) {
  std::istringstream in(read_text(path));
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw CLI::ConversionError(fmt::format("{}:{}: expected key=value", path, lineno));
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    CLI::Option* opt = app->get_option_no_throw("--" + key);
    if (opt == nullptr || key == "config") {
      throw CLI::ExtrasError(fmt::format("{}:{}: unknown key '{}'", path, lineno, key), CLI::ExitCodes::ExtrasError);
    }
    if (opt->count() > 0) continue;
    opt->add_result(value);
    opt->run_callback();
  }
}

void apply_common(ExperimentConfig& cfg, const Common& c) {
  if (c.runs > 0) cfg.runs = c.runs;
  cfg.seed = c.seed;
  cfg.output_dir = c.output.empty() ? default_output_dir() : std::filesystem::path(c.output);
  cfg.threads = c.threads;
}

void report(const ExperimentResult& r) {
  const SummaryStats& s = r.stats;
  fmt::print("{:<32} runs {:>2}/{:<2} median {:<12.6g} mean {:<12.6g} std {:<12.6g} min {:.6g}\n",
             r.config.file_label(), s.count, r.config.runs, s.median, s.mean, s.std, s.min);
  for (const auto& run : r.runs)
    if (run.failed) fmt::print("  run {} failed: {}\n", run.records.empty() ? -1 : run.records.front().run, run.error);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int run_all(const std::vector<ExperimentConfig>& configs) {
  for (const auto& c : configs) c.validate();
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t failed = 0;
  for (const auto& c : configs) {
    const auto t = std::chrono::steady_clock::now();
    const ExperimentResult r = run_experiment(c);
    report(r);
    fmt::print("  wall time {:.2f} s\n", seconds_since(t));
    failed += r.failures();
  }
  if (configs.size() > 1) fmt::print("total wall time {:.2f} s\n", seconds_since(t0));
  if (!configs.empty()) fmt::print("results in {}\n", configs.front().output_dir.string());
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentiable metaheuristics: experiments, plots and gradient checks"};
  app.require_subcommand(1);

  // run
  ExperimentConfig rc;
  Common run_common;
  double lower = 0.0, upper = 0.0;
  bool no_schedule = false, soft = false;
  auto* run = app.add_subcommand("run", "Run a single experiment configuration");
  run->add_option("--algo", rc.algorithm, "Algorithm")
      ->check(CLI::IsMember(algorithm_names()))
      ->capture_default_str();
  run->add_option("--problem", rc.problem, "ackley, griewank, rosenbrock, michalewicz, sphere or wine")
      ->check(CLI::IsMember({"ackley", "griewank", "rosenbrock", "michalewicz", "sphere", "wine"}))
      ->capture_default_str();
  run->add_option("--dim", rc.dim, "Search dimension (ignored for wine)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  run->add_option("--pop", rc.population, "Population size")->check(CLI::PositiveNumber)->capture_default_str();
  run->add_option("--budget", rc.budget, "Fitness evaluations per run (steps for adam)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  run->add_option("--lr", rc.lr, "Outer Adam learning rate")->check(CLI::NonNegativeNumber)->capture_default_str();
  run->add_flag("--no-schedule", no_schedule, "Disable the plateau learning-rate scheduler");
  run->add_option("--loss", rc.loss, "Reduction of candidate fitness to the loss")
      ->check(CLI::IsMember({"min", "mean"}))
      ->capture_default_str();
  run->add_option("--tau", rc.tau, "Relaxation temperature")->check(CLI::PositiveNumber)->capture_default_str();
  run->add_flag("--soft", soft, "Soft relaxed samples instead of straight-through hard ones");
  run->add_option("--lower", lower, "Box lower bound (default -100, wine -10)");
  run->add_option("--upper", upper, "Box upper bound (default 100, wine 10)");
  run->add_option("--sigma0", rc.sigma0, "Initial CMA-ES step size as a fraction of the box width")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  run->add_option("--wine-path", rc.wine_path, "Semicolon-separated red wine quality file");
  run->add_option("--label", rc.label, "Output file prefix (default <algo>_<problem>_<dim>)");
  add_common(run, run_common);

  // suite
  Common suite_common;
  std::vector<Eigen::Index> dims{30, 50};
  std::vector<std::string> suite_algos;
  auto* suite = app.add_subcommand("suite", "Benchmark grid: 4 functions x dimensions x 8 algorithms");
  suite->add_option("--dims", dims, "Dimensions")->check(CLI::PositiveNumber)->capture_default_str();
  suite->add_option("--algos", suite_algos, "Restrict to these algorithms")->check(CLI::IsMember(algorithm_names()));
  add_common(suite, suite_common);

  // wine
  Common wine_common;
  std::string wine_path;
  double wine_sigma0 = 0.3;
  auto* wine = app.add_subcommand("wine", "Neural network regression: differentiable CMA-ES against Adam");
  wine->add_option("--wine-path", wine_path, "Semicolon-separated red wine quality file")->required();
  wine->add_option("--sigma0", wine_sigma0, "CMA-ES initial step size fraction")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  add_common(wine, wine_common);

  // scale
  Common scale_common;
  Eigen::Index scale_dim = 100;
  std::uint64_t scale_budget = 100000;
  auto* scale = app.add_subcommand("scale", "High-dimensional Michalewicz, classical against differentiable CMA-ES");
  scale->add_option("--dim", scale_dim, "Dimension")->check(CLI::PositiveNumber)->capture_default_str();
  scale->add_option("--budget", scale_budget, "Evaluations per run")->check(CLI::PositiveNumber)->capture_default_str();
  add_common(scale, scale_common);

  // plot
  std::string plot_in, plot_out;
  auto* plot = app.add_subcommand("plot", "Render convergence and box plots from run CSVs");
  plot->add_option("--input", plot_in, "Directory with <label>_runNN.csv files")->required();
  plot->add_option("--output", plot_out, "Directory for the SVGs (default: the input directory)");

  // gradcheck
  double tolerance = 1e-4;
  auto* gradcheck = app.add_subcommand("gradcheck", "Central finite-difference check of every gradient");
  gradcheck->add_option("--tolerance", tolerance, "Maximum relative error")->capture_default_str();

  try {
    app.parse(argc, argv);
    for (auto* sub : {run, suite, wine, scale}) {
      if (*sub && sub->count("--config")) {
        const auto path = sub == run ? run_common.config
                          : sub == suite ? suite_common.config
                          : sub == wine  ? wine_common.config
                                         : scale_common.config;
        apply_config_file(sub, path);
      }
    }
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 2;
  }

  try {
    if (*run) {
      rc.schedule = !no_schedule;
      rc.hard = !soft;
      if (run->count("--lower")) rc.lower = lower;
      if (run->count("--upper")) rc.upper = upper;
      apply_common(rc, run_common);
      if (run_common.runs < 0) rc.runs = 1;
      try {
        rc.validate();
      } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "usage error: %s\n%s", e.what(), run->help().c_str());
        return 2;
      }
      return run_all({rc});
    }
    if (*suite) {
      std::vector<ExperimentConfig> configs;
      for (auto c : suite_preset(dims)) {
        if (!suite_algos.empty() && std::find(suite_algos.begin(), suite_algos.end(), c.algorithm) == suite_algos.end())
          continue;
        apply_common(c, suite_common);
        configs.push_back(c);
      }
      return run_all(configs);
    }
    if (*wine) {
      std::vector<ExperimentConfig> configs;
      for (const char* a : {"cmaes-diff", "adam"}) {
        auto c = wine_preset(a, wine_path);
        c.sigma0 = wine_sigma0;
        apply_common(c, wine_common);
        configs.push_back(c);
      }
      return run_all(configs);
    }
    if (*scale) {
      std::vector<ExperimentConfig> configs;
      for (auto c : scale_preset(scale_dim, scale_budget)) {
        apply_common(c, scale_common);
        configs.push_back(c);
      }
      return run_all(configs);
    }
    if (*plot) {
      for (const auto& p : plot_directory(plot_in, plot_out.empty() ? plot_in : plot_out))
        fmt::print("wrote {}\n", p.string());
      return 0;
    }
    if (*gradcheck) {
      const auto t0 = std::chrono::steady_clock::now();
      std::size_t bad = 0;
      for (const auto& item : gradient_suite()) {
        const bool ok = item.result.max_rel_error < tolerance;
        bad += ok ? 0 : 1;
        fmt::print("{} {:<50} entries {:>3}  max rel err {:.3e}  worst {}\n", ok ? "ok  " : "FAIL", item.name,
                   item.result.entries, item.result.max_rel_error, item.result.worst);
      }
      fmt::print("{} failing, wall time {:.3f} s\n", bad, seconds_since(t0));
      return bad == 0 ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
