#include "diffmeta/harness.hpp"

#include "diffmeta/classic.hpp"
#include "diffmeta/diff.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <numeric>
#include <regex>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace diffmeta {

namespace fs = std::filesystem;

namespace {

// Decorrelates the wine noise stream from the algorithm stream of a run.
std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

double parse_number(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw std::runtime_error("malformed number '" + s + "'");
  return v;
}

}  // namespace

// ---- configuration --------------------------------------------------------------

const std::vector<std::string>& algorithm_names() {
  static const std::vector<std::string> names{"pso",      "ga",      "de",      "cmaes",     "pso-diff",
                                              "ga-diff", "de-diff", "cmaes-diff", "adam"};
  return names;
}

bool is_differentiable(const std::string& algorithm) {
  return algorithm == "adam" || algorithm.ends_with("-diff");
}

fs::path default_output_dir() {
  const char* env = std::getenv("DIFFMETA_OUT");
  return env && *env ? fs::path(env) : fs::path("results");
}

double ExperimentConfig::box_lower() const { return lower.value_or(problem == "wine" ? -10.0 : -100.0); }
double ExperimentConfig::box_upper() const { return upper.value_or(problem == "wine" ? 10.0 : 100.0); }

void ExperimentConfig::validate() const {
  const auto& names = algorithm_names();
  if (std::find(names.begin(), names.end(), algorithm) == names.end()) {
    throw std::invalid_argument("unknown algorithm '" + algorithm + "'");
  }
  if (problem != "wine") parse_benchmark(problem);
  if (dim < 1) throw std::invalid_argument("dimension must be at least 1");
  if (population < 1) throw std::invalid_argument("population must be at least 1");
  if (runs < 1) throw std::invalid_argument("runs must be at least 1");
  if (budget == 0) throw std::invalid_argument("budget must be positive");
  if (algorithm != "adam" && budget < static_cast<std::uint64_t>(population)) {
    throw std::invalid_argument("budget must be at least the population size");
  }
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("learning rate must be finite and >= 0");
  parse_loss_mode(loss);
  if (!(tau > 0.0)) throw std::invalid_argument("temperature must be positive");
  if (!(box_lower() < box_upper())) throw std::invalid_argument("lower bound must be below the upper bound");
  if (!(sigma0 > 0.0)) throw std::invalid_argument("sigma0 must be positive");
  if (threads < 0) throw std::invalid_argument("threads must be >= 0");
  if (problem == "wine" && wine_path.empty()) throw std::invalid_argument("the wine problem needs a dataset path");
}

std::string ExperimentConfig::file_label() const {
  if (!label.empty()) return label;
  if (problem == "wine") return fmt::format("{}_wine", algorithm);
  return fmt::format("{}_{}_{}", algorithm, problem, dim);
}

ExperimentConfig wine_preset(const std::string& algorithm, const std::string& wine_path) {
  ExperimentConfig c;
  c.algorithm = algorithm;
  c.problem = "wine";
  c.wine_path = wine_path;
  c.population = 30;
  c.budget = 3000;
  c.runs = 10;
  if (algorithm == "adam") {
    c.lr = 1e-3;
    c.schedule = false;
  }
  return c;
}

std::vector<ExperimentConfig> suite_preset(const std::vector<Eigen::Index>& dims) {
  std::vector<ExperimentConfig> out;
  for (const char* problem : {"ackley", "griewank", "rosenbrock", "michalewicz"}) {
    for (Eigen::Index d : dims) {
      for (const auto& a : algorithm_names()) {
        if (a == "adam") continue;
        ExperimentConfig c;
        c.algorithm = a;
        c.problem = problem;
        c.dim = d;
        c.population = 100;
        c.budget = 5000 * static_cast<std::uint64_t>(d);
        c.runs = 30;
        out.push_back(c);
      }
    }
  }
  return out;
}

std::vector<ExperimentConfig> scale_preset(Eigen::Index dim, std::uint64_t budget) {
  std::vector<ExperimentConfig> out;
  for (const char* a : {"cmaes", "cmaes-diff"}) {
    ExperimentConfig c;
    c.algorithm = a;
    c.problem = "michalewicz";
    c.dim = dim;
    c.population = 100;
    c.budget = budget;
    c.runs = 5;
    out.push_back(c);
  }
  return out;
}

std::unique_ptr<Problem> make_problem(const ExperimentConfig& cfg, std::uint64_t run_seed) {
  if (cfg.problem == "wine") {
    auto data = std::make_shared<const WineDataset>(load_wine(cfg.wine_path, splitmix64(run_seed)));
    return std::make_unique<MlpRegression>(std::move(data), MlpSpec{}, cfg.box_lower(), cfg.box_upper());
  }
  return std::make_unique<BenchmarkProblem>(parse_benchmark(cfg.problem), cfg.dim, cfg.box_lower(),
                                            cfg.box_upper());
}

std::unique_ptr<Algorithm> make_algorithm(const ExperimentConfig& cfg, Problem& problem,
                                          std::uint64_t run_seed) {
  const Eigen::Index n = cfg.population;
  const DiffConfig base{n, RelaxConfig{cfg.tau, cfg.hard}, parse_loss_mode(cfg.loss)};
  const std::string& a = cfg.algorithm;
  if (a == "pso") return std::make_unique<Pso>(problem, PsoConfig{n}, run_seed);
  if (a == "ga") return std::make_unique<Ga>(problem, GaConfig{n}, run_seed);
  if (a == "de") return std::make_unique<De>(problem, DeConfig{n}, run_seed);
  if (a == "cmaes") return std::make_unique<Cmaes>(problem, CmaesConfig{n, cfg.sigma0}, run_seed);
  if (a == "pso-diff") return std::make_unique<DiffPso>(problem, DiffPsoConfig{base}, run_seed);
  if (a == "ga-diff") return std::make_unique<DiffGa>(problem, DiffGaConfig{base}, run_seed);
  if (a == "de-diff") return std::make_unique<DiffDe>(problem, DiffDeConfig{base}, run_seed);
  if (a == "cmaes-diff") {
    DiffCmaesConfig c{base};
    c.sigma0_fraction = cfg.sigma0;
    return std::make_unique<DiffCmaes>(problem, c, run_seed);
  }
  if (a == "adam") return std::make_unique<AdamBaseline>(problem, run_seed);
  throw std::invalid_argument("unknown algorithm '" + a + "'");
}

OuterConfig make_outer(const ExperimentConfig& cfg) {
  OuterConfig outer;
  outer.adam.lr = cfg.lr;
  outer.schedule = cfg.schedule;
  return outer;
}

// ---- statistics ---------------------------------------------------------------

double quantile(std::vector<double> v, double p) {
  if (v.empty()) throw std::invalid_argument("quantile of an empty sample");
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

Quartiles quartiles(const std::vector<double>& values) {
  return {quantile(values, 0.25), quantile(values, 0.5), quantile(values, 0.75)};
}

SummaryStats summarize(const std::vector<double>& values) {
  SummaryStats s;
  s.count = values.size();
  if (values.empty()) return s;
  s.min = *std::min_element(values.begin(), values.end());
  s.max = *std::max_element(values.begin(), values.end());
  s.median = quantile(values, 0.5);
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

std::vector<AbfPoint> abf_curve(const std::vector<std::vector<RunRecord>>& runs) {
  std::size_t longest = 0;
  for (const auto& r : runs) longest = std::max(longest, r.size());
  std::vector<AbfPoint> out;
  for (std::size_t g = 0; g < longest; ++g) {
    std::vector<double> best;
    double evals = 0.0;
    for (const auto& r : runs) {
      if (g >= r.size()) continue;
      best.push_back(r[g].best_fitness);
      evals += static_cast<double>(r[g].n_evals);
    }
    const SummaryStats s = summarize(best);
    out.push_back({static_cast<long>(g), evals / static_cast<double>(best.size()), s.mean, s.std, s.count});
  }
  return out;
}

// ---- experiments ----------------------------------------------------------------

std::vector<double> ExperimentResult::final_values() const {
  std::vector<double> out;
  for (const auto& r : runs)
    if (!r.failed && !r.records.empty()) out.push_back(r.final_best());
  return out;
}

std::size_t ExperimentResult::failures() const {
  return static_cast<std::size_t>(
      std::count_if(runs.begin(), runs.end(), [](const RunResult& r) { return r.failed; }));
}

void parallel_for(int count, int threads, const std::function<void(int)>& job) {
  if (count <= 0) return;
  int workers = threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
  workers = std::clamp(workers, 1, count);
  if (workers == 1) {
    for (int i = 0; i < count; ++i) job(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) {
        try {
          job(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentResult out;
  out.config = cfg;
  out.runs.resize(static_cast<std::size_t>(cfg.runs));
  const OuterConfig outer = make_outer(cfg);
  parallel_for(cfg.runs, cfg.threads, [&](int i) {
    RunResult& slot = out.runs[static_cast<std::size_t>(i)];
    const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(i);
    try {
      auto problem = make_problem(cfg, seed);
      auto algo = make_algorithm(cfg, *problem, seed);
      slot = run_loop(*algo, cfg.budget, outer, i);
    } catch (const std::exception& e) {
      slot.failed = true;
      slot.error = e.what();
    }
  });
  for (std::size_t i = 0; i < out.runs.size(); ++i) {
    if (out.runs[i].failed) {
      std::cerr << fmt::format("warning: {} run {} failed: {}\n", cfg.file_label(), i, out.runs[i].error);
    }
  }
  out.stats = summarize(out.final_values());
  if (cfg.write_files) {
    std::error_code ec;
    fs::create_directories(cfg.output_dir, ec);
    if (ec) throw std::runtime_error(fmt::format("cannot create '{}': {}", cfg.output_dir.string(), ec.message()));
    for (std::size_t i = 0; i < out.runs.size(); ++i) {
      const fs::path p = cfg.output_dir / fmt::format("{}_run{:02d}.csv", cfg.file_label(), i);
      write_text(p, run_csv(out.runs[i].records));
      out.files.push_back(p);
    }
    const fs::path s = cfg.output_dir / fmt::format("{}_summary.csv", cfg.file_label());
    write_text(s, summary_csv(out));
    out.files.push_back(s);
  }
  return out;
}

// ---- CSV ----------------------------------------------------------------------

std::string format_double(double v) { return fmt::format("{:.17g}", v); }

std::string run_csv(const std::vector<RunRecord>& records) {
  std::string out = "run,generation,n_evals,best_fitness,lr";
  if (!records.empty())
    for (const auto& h : records.front().hyper) out += "," + h.name;
  out += "\n";
  for (const auto& r : records) {
    out += fmt::format("{},{},{},{},{}", r.run, r.generation, r.n_evals, format_double(r.best_fitness),
                       format_double(r.lr));
    for (const auto& h : r.hyper) out += "," + format_double(h.value);
    out += "\n";
  }
  return out;
}

std::vector<RunRecord> parse_run_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty run csv");
  const auto header = split(line, ',');
  if (header.size() < 5 || header[0] != "run" || header[1] != "generation" || header[2] != "n_evals" ||
      header[3] != "best_fitness" || header[4] != "lr") {
    throw std::runtime_error("unexpected run csv header '" + line + "'");
  }
  std::vector<RunRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != header.size()) {
      throw std::runtime_error(fmt::format("run csv row has {} cells, header has {}", cells.size(), header.size()));
    }
    RunRecord r;
    r.run = static_cast<int>(parse_number(cells[0]));
    r.generation = static_cast<long>(parse_number(cells[1]));
    r.n_evals = static_cast<std::uint64_t>(parse_number(cells[2]));
    r.best_fitness = parse_number(cells[3]);
    r.lr = parse_number(cells[4]);
    for (std::size_t k = 5; k < cells.size(); ++k) r.hyper.push_back({header[k], parse_number(cells[k])});
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<RunRecord> read_run_csv(const fs::path& path) { return parse_run_csv(read_text(path)); }

std::string summary_csv(const ExperimentResult& result) {
  const ExperimentConfig& c = result.config;
  const SummaryStats& s = result.stats;
  std::string out = "label,algorithm,problem,dim,population,budget,runs,completed,min,max,median,mean,std\n";
  out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{}\n", c.file_label(), c.algorithm, c.problem, c.dim,
                     c.population, c.budget, c.runs, s.count, format_double(s.min), format_double(s.max),
                     format_double(s.median), format_double(s.mean), format_double(s.std));
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  f << text;
  if (!f) throw std::runtime_error("failed writing '" + path.string() + "'");
}

std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// ---- SVG ----------------------------------------------------------------------

namespace {

constexpr double kWidth = 760.0;
constexpr double kHeight = 460.0;
constexpr double kLeft = 80.0;
constexpr double kRight = 170.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 60.0;

const char* colour(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                  "#9467bd", "#8c564b", "#e377c2", "#17becf"};
  return palette[i % 8];
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// Maps data values onto a pixel interval, optionally in log10.
struct Axis {
  double lo, hi;
  double p0, p1;
  bool log = false;

  double operator()(double v) const {
    const double t = log ? (std::log10(v) - lo) / (hi - lo) : (v - lo) / (hi - lo);
    return p0 + t * (p1 - p0);
  }
  double value_at(double t) const {
    const double v = lo + t * (hi - lo);
    return log ? std::pow(10.0, v) : v;
  }
};

Axis make_axis(double lo, double hi, double p0, double p1, bool log) {
  if (log) {
    lo = std::log10(lo);
    hi = std::log10(hi);
  }
  if (!(hi > lo)) {
    const double pad = lo == 0.0 ? 1.0 : std::abs(lo) * 0.1;
    lo -= pad;
    hi += pad;
  }
  return {lo, hi, p0, p1, log};
}

std::string header(const std::string& title) {
  std::string s = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\" viewBox=\"0 0 {:.0f} {:.0f}\" "
      "font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
      kWidth, kHeight, kWidth, kHeight);
  if (!title.empty()) {
    s += fmt::format("<text x=\"{:.1f}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
                     (kLeft + kWidth - kRight) / 2.0, escape(title));
  }
  return s;
}

std::string y_ticks(const Axis& y) {
  std::string s;
  for (int k = 0; k <= 5; ++k) {
    const double t = k / 5.0;
    const double py = y.p0 + t * (y.p1 - y.p0);
    s += fmt::format("<line x1=\"{:.1f}\" y1=\"{:.2f}\" x2=\"{:.1f}\" y2=\"{:.2f}\" stroke=\"#ddd\"/>\n", kLeft, py,
                     kWidth - kRight, py);
    s += fmt::format("<text x=\"{:.1f}\" y=\"{:.2f}\" text-anchor=\"end\">{:.4g}</text>\n", kLeft - 6.0, py + 4.0,
                     y.value_at(t));
  }
  return s;
}

std::string frame() {
  return fmt::format("<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"{:.1f}\" height=\"{:.1f}\" fill=\"none\" stroke=\"black\"/>\n",
                     kLeft, kTop, kWidth - kLeft - kRight, kHeight - kTop - kBottom);
}

}  // namespace

std::string convergence_svg(const std::vector<CurveSeries>& series, const std::string& title) {
  if (series.empty()) throw std::invalid_argument("convergence plot needs at least one series");
  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  bool positive = true;
  for (const auto& s : series) {
    if (s.points.empty()) throw std::invalid_argument("convergence series '" + s.label + "' is empty");
    for (const auto& p : s.points) {
      xmin = std::min(xmin, p.n_evals);
      xmax = std::max(xmax, p.n_evals);
      ymin = std::min(ymin, p.mean - p.std);
      ymax = std::max(ymax, p.mean + p.std);
      positive = positive && p.mean > 0.0;
    }
  }
  // log scale only when every curve stays positive and spans decades
  double floor = INFINITY;
  if (positive) {
    for (const auto& s : series)
      for (const auto& p : s.points) floor = std::min(floor, p.mean);
  }
  const bool log = positive && ymax / floor > 1e3;
  if (log) ymin = std::max(ymin, floor);
  const Axis x = make_axis(xmin, xmax, kLeft, kWidth - kRight, false);
  const Axis y = make_axis(ymin, ymax, kHeight - kBottom, kTop, log);
  auto yv = [&](double v) { return y(log ? std::max(v, floor) : v); };

  std::string s = header(title) + y_ticks(y);
  for (int k = 0; k <= 4; ++k) {
    const double t = k / 4.0;
    s += fmt::format("<text x=\"{:.2f}\" y=\"{:.1f}\" text-anchor=\"middle\">{:.4g}</text>\n",
                     x.p0 + t * (x.p1 - x.p0), kHeight - kBottom + 18.0, x.value_at(t));
  }
  s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">evaluations</text>\n",
                   (kLeft + kWidth - kRight) / 2.0, kHeight - 15.0);
  s += fmt::format("<text x=\"18\" y=\"{:.1f}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {:.1f})\">"
                   "best fitness (mean &#177; std{})</text>\n",
                   (kTop + kHeight - kBottom) / 2.0, (kTop + kHeight - kBottom) / 2.0, log ? ", log" : "");
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& pts = series[i].points;
    std::string band, line;
    for (const auto& p : pts) band += fmt::format("{:.2f},{:.2f} ", x(p.n_evals), yv(p.mean + p.std));
    for (auto it = pts.rbegin(); it != pts.rend(); ++it)
      band += fmt::format("{:.2f},{:.2f} ", x(it->n_evals), yv(it->mean - it->std));
    for (const auto& p : pts) line += fmt::format("{:.2f},{:.2f} ", x(p.n_evals), yv(p.mean));
    band.pop_back();
    line.pop_back();
    s += fmt::format("<polygon points=\"{}\" fill=\"{}\" fill-opacity=\"0.2\" stroke=\"none\"/>\n", band, colour(i));
    s += fmt::format("<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>\n", line, colour(i));
    const double ly = kTop + 10.0 + 18.0 * static_cast<double>(i);
    s += fmt::format("<line x1=\"{:.1f}\" y1=\"{:.1f}\" x2=\"{:.1f}\" y2=\"{:.1f}\" stroke=\"{}\" stroke-width=\"3\"/>\n",
                     kWidth - kRight + 12.0, ly, kWidth - kRight + 32.0, ly, colour(i));
    s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\">{}</text>\n", kWidth - kRight + 38.0, ly + 4.0,
                     escape(series[i].label));
  }
  return s + frame() + "</svg>\n";
}

std::string boxplot_svg(const std::vector<BoxSeries>& series, const std::string& title) {
  if (series.empty()) throw std::invalid_argument("boxplot needs at least one series");
  double ymin = INFINITY, ymax = -INFINITY;
  for (const auto& b : series) {
    if (b.values.empty()) throw std::invalid_argument("boxplot series '" + b.label + "' is empty");
    for (double v : b.values) {
      ymin = std::min(ymin, v);
      ymax = std::max(ymax, v);
    }
  }
  const Axis y = make_axis(ymin, ymax, kHeight - kBottom, kTop, false);
  const double slot = (kWidth - kLeft - kRight) / static_cast<double>(series.size());
  std::string s = header(title) + y_ticks(y);
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& v = series[i].values;
    const Quartiles q = quartiles(v);
    const double iqr = q.q3 - q.q1;
    const double lo_fence = q.q1 - 1.5 * iqr;
    const double hi_fence = q.q3 + 1.5 * iqr;
    double wlo = q.q1, whi = q.q3;
    for (double x : v) {
      if (x >= lo_fence) wlo = std::min(wlo, x);
      if (x <= hi_fence) whi = std::max(whi, x);
    }
    const double cx = kLeft + slot * (static_cast<double>(i) + 0.5);
    const double hw = std::min(30.0, slot * 0.3);
    const char* c = colour(i);
    s += fmt::format("<line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"{}\"/>\n", cx, y(wlo), cx,
                     y(q.q1), c);
    s += fmt::format("<line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"{}\"/>\n", cx, y(q.q3), cx,
                     y(whi), c);
    for (double w : {wlo, whi}) {
      s += fmt::format("<line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"{}\"/>\n", cx - hw / 2.0,
                       y(w), cx + hw / 2.0, y(w), c);
    }
    s += fmt::format(
        "<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" fill=\"{}\" fill-opacity=\"0.25\" "
        "stroke=\"{}\"/>\n",
        cx - hw, y(q.q3), 2.0 * hw, std::max(y(q.q1) - y(q.q3), 0.5), c, c);
    s += fmt::format("<line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"black\" stroke-width=\"2\"/>\n",
                     cx - hw, y(q.median), cx + hw, y(q.median));
    for (double x : v) {
      if (x < lo_fence || x > hi_fence) {
        s += fmt::format("<circle class=\"outlier\" cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"3\" fill=\"none\" stroke=\"{}\"/>\n",
                         cx, y(x), c);
      }
    }
    s += fmt::format("<text x=\"{:.2f}\" y=\"{:.1f}\" text-anchor=\"middle\">{}</text>\n", cx,
                     kHeight - kBottom + 18.0, escape(series[i].label));
  }
  return s + frame() + "</svg>\n";
}

void emit_convergence_svg(const std::vector<CurveSeries>& series, const fs::path& path, const std::string& title) {
  write_text(path, convergence_svg(series, title));
}

void emit_boxplot_svg(const std::vector<BoxSeries>& series, const fs::path& path, const std::string& title) {
  write_text(path, boxplot_svg(series, title));
}

std::vector<fs::path> plot_directory(const fs::path& in, const fs::path& out) {
  if (!fs::is_directory(in)) throw std::runtime_error("'" + in.string() + "' is not a directory");
  static const std::regex pattern(R"((.+)_run(\d+)\.csv)");
  std::map<std::string, std::map<int, fs::path>> groups;
  for (const auto& entry : fs::directory_iterator(in)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (entry.is_regular_file() && std::regex_match(name, m, pattern)) {
      groups[m[1].str()][std::stoi(m[2].str())] = entry.path();
    }
  }
  if (groups.empty()) throw std::runtime_error("no <label>_runNN.csv files in '" + in.string() + "'");
  std::vector<CurveSeries> curves;
  std::vector<BoxSeries> boxes;
  for (const auto& [label, files] : groups) {
    std::vector<std::vector<RunRecord>> runs;
    BoxSeries box{label, {}};
    for (const auto& [idx, path] : files) {
      runs.push_back(read_run_csv(path));
      if (!runs.back().empty()) box.values.push_back(runs.back().back().best_fitness);
    }
    curves.push_back({label, abf_curve(runs)});
    if (!box.values.empty()) boxes.push_back(std::move(box));
  }
  fs::create_directories(out);
  const fs::path conv = out / "convergence.svg";
  const fs::path bp = out / "boxplot.svg";
  emit_convergence_svg(curves, conv, "average best fitness");
  emit_boxplot_svg(boxes, bp, "final best fitness");
  return {conv, bp};
}

}  // namespace diffmeta
