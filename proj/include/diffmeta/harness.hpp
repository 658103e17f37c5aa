#pragma once

// Experiment orchestration: configuration, seeded parallel runs, CSV output,
// summary statistics and SVG figures.

#include "diffmeta/algorithm.hpp"
#include "diffmeta/outer.hpp"
#include "diffmeta/problems.hpp"

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace diffmeta {

struct ExperimentConfig {
  /// pso, ga, de, cmaes, their "-diff" variants, or adam.
  std::string algorithm = "cmaes-diff";
  /// A benchmark name or "wine".
  std::string problem = "sphere";
  Eigen::Index dim = 10;  // ignored for wine
  Eigen::Index population = 100;
  std::uint64_t budget = 10000;
  int runs = 1;
  std::uint64_t seed = 0;
  double lr = 0.01;
  bool schedule = true;
  std::string loss = "min";
  double tau = 1.0;
  bool hard = true;
  /// Box bounds; default to [-100, 100] for benchmarks and [-10, 10] for wine.
  std::optional<double> lower;
  std::optional<double> upper;
  double sigma0 = 0.3;
  std::string wine_path;
  std::filesystem::path output_dir = "results";
  /// File prefix; defaults to <algorithm>_<problem>_<dim>.
  std::string label;
  /// Worker threads; 0 uses the hardware concurrency.
  int threads = 0;
  bool write_files = true;

  void validate() const;
  std::string file_label() const;
  double box_lower() const;
  double box_upper() const;
};

/// Output directory from DIFFMETA_OUT, else "results".
std::filesystem::path default_output_dir();

const std::vector<std::string>& algorithm_names();
bool is_differentiable(const std::string& algorithm);

// ---- presets ------------------------------------------------------------------

/// Wine regression arm: population 30 and 3000 evaluations; the adam arm
/// takes 3000 full-batch steps at lr 1e-3 without the plateau scheduler.
ExperimentConfig wine_preset(const std::string& algorithm, const std::string& wine_path);
/// Benchmark grid: ackley, griewank, rosenbrock, michalewicz at the given
/// dimensions, 5000 * dim evaluations, population 100, for the eight
/// population algorithms.
std::vector<ExperimentConfig> suite_preset(const std::vector<Eigen::Index>& dims = {30, 50});
/// High-dimensional Michalewicz study, classical against differentiable CMA-ES.
std::vector<ExperimentConfig> scale_preset(Eigen::Index dim = 100, std::uint64_t budget = 100000);

std::unique_ptr<Problem> make_problem(const ExperimentConfig& cfg, std::uint64_t run_seed);
std::unique_ptr<Algorithm> make_algorithm(const ExperimentConfig& cfg, Problem& problem,
                                          std::uint64_t run_seed);
OuterConfig make_outer(const ExperimentConfig& cfg);

// ---- statistics ---------------------------------------------------------------

struct SummaryStats {
  std::size_t count = 0;
  double min = 0.0;
  double max = 0.0;
  double median = 0.0;
  double mean = 0.0;
  double std = 0.0;  // sample (n - 1) denominator; 0 for a single value
};

SummaryStats summarize(const std::vector<double>& values);

struct Quartiles {
  double q1;
  double median;
  double q3;
};

/// Linear interpolation between order statistics at h = (n - 1) p.
double quantile(std::vector<double> values, double p);
Quartiles quartiles(const std::vector<double>& values);

struct AbfPoint {
  long generation = 0;
  double n_evals = 0.0;
  double mean = 0.0;
  double std = 0.0;
  std::size_t count = 0;
};

/// Mean and sample std of best-so-far per generation across runs (runs
/// shorter than a generation drop out of it).
std::vector<AbfPoint> abf_curve(const std::vector<std::vector<RunRecord>>& runs);

// ---- experiments ----------------------------------------------------------------

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<RunResult> runs;
  SummaryStats stats;  // over completed runs
  std::vector<std::filesystem::path> files;

  std::vector<double> final_values() const;
  std::size_t failures() const;
};

/// Runs `count` jobs on up to `threads` workers; job i only writes slot i.
void parallel_for(int count, int threads, const std::function<void(int)>& job);

ExperimentResult run_experiment(const ExperimentConfig& cfg);

// ---- CSV ----------------------------------------------------------------------

std::string format_double(double v);
std::string run_csv(const std::vector<RunRecord>& records);
std::vector<RunRecord> parse_run_csv(const std::string& text);
std::vector<RunRecord> read_run_csv(const std::filesystem::path& path);
std::string summary_csv(const ExperimentResult& result);
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

// ---- SVG ----------------------------------------------------------------------

struct CurveSeries {
  std::string label;
  std::vector<AbfPoint> points;
};

struct BoxSeries {
  std::string label;
  std::vector<double> values;
};

std::string convergence_svg(const std::vector<CurveSeries>& series, const std::string& title = {});
std::string boxplot_svg(const std::vector<BoxSeries>& series, const std::string& title = {});
void emit_convergence_svg(const std::vector<CurveSeries>& series, const std::filesystem::path& path,
                          const std::string& title = {});
void emit_boxplot_svg(const std::vector<BoxSeries>& series, const std::filesystem::path& path,
                      const std::string& title = {});

/// Groups <label>_runNN.csv files in a directory by label and renders
/// convergence.svg and boxplot.svg into `out`. Returns the written paths.
std::vector<std::filesystem::path> plot_directory(const std::filesystem::path& in,
                                                  const std::filesystem::path& out);

}  // namespace diffmeta
