// Acceptance checks. `acceptance <n>` runs criterion n (1-8), `acceptance all`
// runs every one. Each prints a single PASS/FAIL line with the measured
// values; the exit code is nonzero if any requested criterion failed.

#include "diffmeta/classic.hpp"
#include "diffmeta/diff.hpp"
#include "diffmeta/gradsuite.hpp"
#include "diffmeta/harness.hpp"

#include <fmt/core.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>

using namespace diffmeta;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Outcome gradients() {
  const auto t0 = Clock::now();
  const auto items = gradient_suite();
  double worst = 0.0;
  std::string worst_name;
  std::size_t bad = 0;
  for (const auto& it : items) {
    if (!(it.result.max_rel_error < 1e-4)) ++bad;
    if (it.result.max_rel_error >= worst) {
      worst = it.result.max_rel_error;
      worst_name = it.name;
    }
  }
  const double t = since(t0);
  return {bad == 0 && t < 60.0,
          fmt::format("{} checks, {} above 1e-4, worst {:.3e} ({}), {:.3f} s", items.size(), bad, worst, worst_name, t)};
}

Outcome relaxation() {
  const auto t0 = Clock::now();
  const int n = 100000;
  bool ok = true;
  std::string detail;
  for (double alpha : {-2.0, 0.0, 2.0}) {
    Tape t;
    Rng rng(1000 + static_cast<std::uint64_t>(alpha + 2.0));
    const double freq =
        gumbel_sigmoid(t.constant(Matrix::Constant(n, 1, alpha)), RelaxConfig{1.0, true}, rng).value().mean();
    const double p = 1.0 / (1.0 + std::exp(-alpha));
    const double z = (freq - p) / std::sqrt(p * (1.0 - p) / n);
    ok = ok && std::abs(z) < 3.0;
    detail += fmt::format("sigmoid a={:+g}: {:.4f} vs {:.4f} (z {:+.2f}); ", alpha, freq, p, z);
  }
  const int k = 5;
  Tape t;
  Rng rng(2000);
  const Matrix h = gumbel_softmax(t.constant(Matrix::Zero(n, k)), RelaxConfig{1.0, true}, rng).value();
  double zmax = 0.0;
  for (Eigen::Index j = 0; j < k; ++j) {
    const double p = 1.0 / k;
    zmax = std::max(zmax, std::abs(h.col(j).mean() - p) / std::sqrt(p * (1.0 - p) / n));
  }
  ok = ok && zmax < 3.0;
  const double secs = since(t0);
  detail += fmt::format("softmax k={} max |z| {:.2f}; {:.2f} s", k, zmax, secs);
  return {ok && secs < 60.0, detail};
}

Outcome classical() {
  const auto t0 = Clock::now();
  BenchmarkProblem sphere(Benchmark::Sphere, 10);
  Cmaes es(sphere, CmaesConfig{10}, 20);
  while (sphere.evaluations() < 10000 && es.best_fitness() >= 1e-8) es.generation();
  const bool cma_ok = es.best_fitness() < 1e-8;

  bool de_ok = true;
  for (DeStrategy s : {DeStrategy::Rand1, DeStrategy::CurrentToBest1}) {
    BenchmarkProblem p(Benchmark::Rosenbrock, 10);
    De de(p, DeConfig{20, 0.5, 0.9, s}, 3);
    de.generation();
    Vector prev = de.fitness();
    for (int g = 0; g < 100; ++g) {
      de.generation();
      de_ok = de_ok && (de.fitness().array() <= prev.array()).all();
      prev = de.fitness();
    }
  }

  auto monotone = [](Algorithm& a) {
    double last = INFINITY;
    bool ok = true;
    for (int g = 0; g < 100; ++g) {
      a.generation();
      ok = ok && a.best_fitness() <= last;
      last = a.best_fitness();
    }
    return ok;
  };
  BenchmarkProblem pa(Benchmark::Ackley, 10), pb(Benchmark::Ackley, 10);
  Ga ga(pa, GaConfig{20}, 4);
  Pso pso(pb, PsoConfig{20}, 4);
  const bool ga_ok = monotone(ga);
  const bool pso_ok = monotone(pso);
  const double secs = since(t0);
  return {cma_ok && de_ok && ga_ok && pso_ok && secs < 60.0,
          fmt::format("cmaes sphere-10 {:.3e} after {} evals; de per-slot monotone {}; ga monotone {}; "
                      "pso monotone {}; {:.2f} s",
                      es.best_fitness(), sphere.evaluations(), de_ok, ga_ok, pso_ok, secs)};
}

Outcome equivalence() {
  double worst = 0.0;
  auto step = [](Algorithm& diff, Adam& adam) {
    diff.tape()->zero_grad();
    diff.tape()->backward(diff.generation());
    adam.step(diff.tape()->parameters());
    diff.update_state();
  };
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    BenchmarkProblem p1(Benchmark::Ackley, 3, -5.0, 5.0), p2(Benchmark::Ackley, 3, -5.0, 5.0);
    Pso classic(p1, PsoConfig{5}, seed);
    DiffPso diff(p2, DiffPsoConfig{DiffConfig{5, RelaxConfig{}, LossMode::Min}}, seed);
    Adam adam(AdamConfig{0.0});
    for (int g = 0; g < 3; ++g) {
      classic.generation();
      step(diff, adam);
      worst = std::max({worst, (diff.positions() - classic.positions()).cwiseAbs().maxCoeff(),
                        (diff.velocities() - classic.velocities()).cwiseAbs().maxCoeff(),
                        std::abs(diff.best_fitness() - classic.best_fitness())});
    }
  }
  for (DeStrategy s : {DeStrategy::Rand1, DeStrategy::CurrentToBest1}) {
    for (std::uint64_t seed : {4u, 5u, 6u}) {
      BenchmarkProblem p1(Benchmark::Rosenbrock, 3, -5.0, 5.0), p2(Benchmark::Rosenbrock, 3, -5.0, 5.0);
      DiffDeConfig dc{DiffConfig{5, RelaxConfig{}, LossMode::Min}};
      dc.strategy = s;
      dc.hard_selection = true;
      DiffDe diff(p2, dc, seed);
      De classic(p1, DeConfig{5, diff.phi().value()(0, 0), 0.9, s}, seed);
      Adam adam(AdamConfig{0.0});
      for (int g = 0; g < 3; ++g) {
        classic.generation();
        step(diff, adam);
        worst = std::max({worst, (diff.population() - classic.population()).cwiseAbs().maxCoeff(),
                          (diff.fitness() - classic.fitness()).cwiseAbs().maxCoeff()});
      }
    }
  }
  return {worst <= 1e-10, fmt::format("pso-diff and de-diff vs classical, N=5 D=3, 3 generations: max deviation {:.3e}",
                                      worst)};
}

std::string wine_path() { return std::string(DIFFMETA_DATA_DIR) + "/winequality-red.csv"; }

Outcome wine() {
  const auto t0 = Clock::now();
  ExperimentConfig es = wine_preset("cmaes-diff", wine_path());
  ExperimentConfig adam = wine_preset("adam", wine_path());
  es.write_files = adam.write_files = false;
  const auto r_es = run_experiment(es);
  const auto r_adam = run_experiment(adam);
  const double secs = since(t0);
  const bool ok = r_es.failures() == 0 && r_adam.failures() == 0 && r_es.stats.mean <= 10.0 &&
                  r_adam.stats.mean >= 30.0;
  return {ok, fmt::format("cmaes-diff MSE mean {:.3f} +- {:.3f} (need <= 10), adam MSE mean {:.3f} +- {:.3f} "
                          "(need >= 30), {} runs each, {:.0f} s",
                          r_es.stats.mean, r_es.stats.std, r_adam.stats.mean, r_adam.stats.std, es.runs, secs)};
}

Outcome scaling() {
  const auto t0 = Clock::now();
  auto configs = scale_preset(100, 100000);
  double median[2];
  std::size_t failures = 0;
  for (int i = 0; i < 2; ++i) {
    configs[i].write_files = false;
    const auto r = run_experiment(configs[i]);
    median[i] = r.stats.median;
    failures += r.failures();
  }
  return {failures == 0 && median[1] < median[0],
          fmt::format("michalewicz D=100, 100000 evals, N=100, 5 runs: cmaes-diff median {:.4f}, cmaes median "
                      "{:.4f}, {:.0f} s",
                      median[1], median[0], since(t0))};
}

Outcome grid() {
  const auto t0 = Clock::now();
  bool ok = true;
  std::string detail;
  for (const char* problem : {"ackley", "griewank"}) {
    double med[3];
    const char* algos[3] = {"cmaes-diff", "ga", "de"};
    for (int i = 0; i < 3; ++i) {
      ExperimentConfig c;
      c.algorithm = algos[i];
      c.problem = problem;
      c.dim = 30;
      c.population = 100;
      c.budget = 150000;
      c.runs = 5;
      c.write_files = false;
      const auto r = run_experiment(c);
      ok = ok && r.failures() == 0;
      med[i] = r.stats.median;
    }
    ok = ok && med[0] <= med[1] && med[0] <= med[2];
    detail += fmt::format("{}: cmaes-diff {:.10g}, ga {:.10g}, de {:.10g}; ", problem, med[0], med[1], med[2]);
  }
  return {ok, detail + fmt::format("D=30, 150000 evals, 5 runs, {:.0f} s", since(t0))};
}

Outcome determinism() {
  std::size_t compared = 0, differing = 0;
  std::vector<ExperimentConfig> configs;
  for (const auto& a : algorithm_names()) {
    ExperimentConfig c;
    c.algorithm = a;
    c.problem = "rosenbrock";
    c.dim = 5;
    c.population = 12;
    c.budget = 1200;
    c.runs = 3;
    c.seed = 42;
    configs.push_back(c);
  }
  ExperimentConfig w = wine_preset("cmaes-diff", wine_path());
  w.budget = 150;
  w.runs = 2;
  configs.push_back(w);
  for (auto& c : configs) {
    const fs::path a = fs::temp_directory_path() / "diffmeta_acc_a", b = fs::temp_directory_path() / "diffmeta_acc_b";
    fs::remove_all(a);
    fs::remove_all(b);
    c.output_dir = a;
    const auto ra = run_experiment(c);
    c.output_dir = b;
    c.threads = 1;
    const auto rb = run_experiment(c);
    for (std::size_t i = 0; i < ra.files.size(); ++i) {
      ++compared;
      if (i >= rb.files.size() || read_text(ra.files[i]) != read_text(rb.files[i])) ++differing;
    }
    fs::remove_all(a);
    fs::remove_all(b);
  }
  return {differing == 0 && compared > 0,
          fmt::format("{} configurations, {} csv files compared, {} differ", configs.size(), compared, differing)};
}

const char* kNames[] = {"",
                        "gradient suite",
                        "relaxation statistics",
                        "classical oracles",
                        "zero learning rate equivalence",
                        "wine regression",
                        "scaled michalewicz",
                        "benchmark grid ordering",
                        "determinism"};

bool run(int k) {
  static const std::function<Outcome()> checks[] = {nullptr,    gradients, relaxation, classical, equivalence,
                                                    wine,       scaling,   grid,       determinism};
  Outcome o{false, ""};
  try {
    o = checks[k]();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  fmt::print("criterion {} {}: {}: {}\n", k, o.pass ? "PASS" : "FAIL", kNames[k], o.detail);
  std::fflush(stdout);
  return o.pass;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    fmt::print(stderr, "usage: {} <1-8|all>\n", argv[0]);
    return 2;
  }
  const std::string arg = argv[1];
  if (arg == "all") {
    bool ok = true;
    for (int k = 1; k <= 8; ++k) ok = run(k) && ok;
    return ok ? 0 : 1;
  }
  const int k = std::atoi(arg.c_str());
  if (k < 1 || k > 8) {
    fmt::print(stderr, "unknown criterion '{}'\n", arg);
    return 2;
  }
  return run(k) ? 0 : 1;
}
