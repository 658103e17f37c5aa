#include "diffmeta/problems.hpp"

#include "diffmeta/relax.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace diffmeta {

// ---- BoxDomain ------------------------------------------------------------

BoxDomain BoxDomain::uniform(Eigen::Index dim, double lo, double hi) {
  if (dim <= 0) throw std::invalid_argument("box dimension must be positive");
  BoxDomain b{Vector::Constant(dim, lo), Vector::Constant(dim, hi)};
  b.validate();
  return b;
}

void BoxDomain::validate() const {
  if (lower.size() != upper.size() || lower.size() == 0) {
    throw std::invalid_argument("box bounds must be nonempty and of equal length");
  }
  if (!(lower.array() < upper.array()).all()) {
    throw std::invalid_argument("box lower bound must be below the upper bound");
  }
}

bool BoxDomain::contains(const Matrix& population) const {
  if (population.cols() != dim()) return false;
  for (Eigen::Index i = 0; i < population.rows(); ++i) {
    if ((population.row(i).transpose().array() < lower.array()).any()) return false;
    if ((population.row(i).transpose().array() > upper.array()).any()) return false;
  }
  return true;
}

Matrix BoxDomain::sample(Eigen::Index count, Rng& rng) const {
  Matrix u = rng.uniform(count, dim());
  return (u.array().rowwise() * width().transpose().array()).rowwise() +
         lower.transpose().array();
}

// ---- Problem ----------------------------------------------------------------

Problem::Problem(std::string name, BoxDomain domain)
    : name_(std::move(name)), domain_(std::move(domain)) {
  domain_.validate();
}

Var Problem::evaluate(const Var& population) {
  if (population.cols() != dimension()) {
    throw std::invalid_argument(name_ + ": expected " + std::to_string(dimension()) +
                                " columns, got " + std::to_string(population.cols()));
  }
  Var f = fitness(population);
  evaluations_ += static_cast<std::uint64_t>(population.rows());
  return f;
}

Vector Problem::evaluate(const Matrix& population) {
  Tape scratch;
  return evaluate(scratch.constant(population)).value().col(0);
}

// ---- benchmarks -------------------------------------------------------------

namespace {

// 1-based coordinate index replicated over the rows of x.
Var coordinate_index(const Var& x, double (*f)(double)) {
  Matrix c(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) c.col(j).setConstant(f(static_cast<double>(j + 1)));
  return x.tape()->constant(std::move(c));
}

}  // namespace

Var sphere(const Var& x) { return row_sum(square(x)); }

Var ackley(const Var& x) {
  // 20 (1 - e^{-0.2 r}) + (e - e^{mean cos}) keeps both terms cancellation-free.
  const Var r = sqrt(row_mean(square(x)));
  const Var t1 = -20.0 * expm1(-0.2 * r);
  const Var t2 = std::numbers::e - exp(row_mean(cos(2.0 * std::numbers::pi * x)));
  return t1 + t2;
}

Var griewank(const Var& x) {
  // 1 - prod cos(t_i) = 1 - prod (1 - 2 sin^2(t_i / 2))
  const Var inv_sqrt = coordinate_index(x, [](double i) { return 1.0 / std::sqrt(i); });
  const Var s = 2.0 * square(sin(0.5 * (x * inv_sqrt)));
  return row_sum(square(x)) / 4000.0 + row_noisy_or(s);
}

Var rosenbrock(const Var& x) {
  const Eigen::Index d = x.cols();
  if (d < 2) throw std::invalid_argument("rosenbrock needs at least 2 dimensions");
  const Var a = middle_cols(x, 0, d - 1);
  const Var b = middle_cols(x, 1, d - 1);
  return row_sum(100.0 * square(b - square(a)) + square(1.0 - a));
}

Var michalewicz(const Var& x, int m) {
  const Var idx = coordinate_index(x, [](double i) { return i / std::numbers::pi; });
  const Var s = sin(idx * square(x));
  return -row_sum(sin(x) * pow(square(s), static_cast<double>(m)));
}

Benchmark parse_benchmark(const std::string& name) {
  if (name == "sphere") return Benchmark::Sphere;
  if (name == "ackley") return Benchmark::Ackley;
  if (name == "griewank") return Benchmark::Griewank;
  if (name == "rosenbrock") return Benchmark::Rosenbrock;
  if (name == "michalewicz") return Benchmark::Michalewicz;
  throw std::invalid_argument("unknown benchmark '" + name + "'");
}

const char* benchmark_name(Benchmark b) {
  switch (b) {
    case Benchmark::Sphere: return "sphere";
    case Benchmark::Ackley: return "ackley";
    case Benchmark::Griewank: return "griewank";
    case Benchmark::Rosenbrock: return "rosenbrock";
    case Benchmark::Michalewicz: return "michalewicz";
  }
  return "?";
}

BenchmarkProblem::BenchmarkProblem(Benchmark kind, Eigen::Index dim, double lo, double hi)
    : Problem(benchmark_name(kind), BoxDomain::uniform(dim, lo, hi)), kind_(kind) {
  if (kind == Benchmark::Rosenbrock && dim < 2) {
    throw std::invalid_argument("rosenbrock needs at least 2 dimensions");
  }
}

std::unique_ptr<Problem> BenchmarkProblem::clone() const {
  auto p = std::make_unique<BenchmarkProblem>(*this);
  p->reset_evaluations();
  return p;
}

Var BenchmarkProblem::fitness(const Var& x) const {
  switch (kind_) {
    case Benchmark::Sphere: return sphere(x);
    case Benchmark::Ackley: return ackley(x);
    case Benchmark::Griewank: return griewank(x);
    case Benchmark::Rosenbrock: return rosenbrock(x);
    case Benchmark::Michalewicz: return michalewicz(x);
  }
  throw std::logic_error("unhandled benchmark");
}

std::unique_ptr<Problem> make_benchmark(const std::string& name, Eigen::Index dim, double lo,
                                        double hi) {
  return std::make_unique<BenchmarkProblem>(parse_benchmark(name), dim, lo, hi);
}

// ---- MLP --------------------------------------------------------------------

Var mlp_forward(const Var& params, const Var& features, const MlpSpec& spec) {
  const Eigen::Index p = spec.param_count();
  if ((params.rows() != 1 && params.cols() != 1) || params.size() != p) {
    throw std::invalid_argument("mlp_forward: expected " + std::to_string(p) +
                                " parameters, got " + std::to_string(params.size()));
  }
  if (features.cols() != spec.inputs) {
    throw std::invalid_argument("mlp_forward: expected " + std::to_string(spec.inputs) +
                                " feature columns, got " + std::to_string(features.cols()));
  }
  const Eigen::Index w1 = spec.inputs * spec.hidden;
  const Eigen::Index w2 = spec.hidden * spec.outputs;
  Eigen::Index at = 0;
  auto take = [&](Eigen::Index n) {
    Var s = segment(params, at, n);
    at += n;
    return s;
  };
  const Var W1 = reshape(take(w1), spec.inputs, spec.hidden);
  const Var b1 = take(spec.hidden);
  const Var W2 = reshape(take(w2), spec.hidden, spec.outputs);
  const Var b2 = take(spec.outputs);
  const Var h = tanh(add_row_vector(matmul(features, W1), b1));
  return add_row_vector(matmul(h, W2), b2);
}

Var mse_loss(const Var& pred, const Var& target) {
  if (pred.size() == 0) throw std::invalid_argument("mse_loss: empty input");
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw std::invalid_argument("mse_loss: prediction and target lengths differ");
  }
  return mean(square(pred - target));
}

// ---- wine data --------------------------------------------------------------

namespace {

std::vector<std::string_view> split(std::string_view line, char delim) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(delim, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\"";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

bool parse_double(std::string_view s, double& out) {
  s = trim(s);
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

WineDataset load_wine(const std::string& path, std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open wine dataset '" + path + "'");
  constexpr Eigen::Index kCols = 12;
  std::vector<double> values;
  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const char delim = line.find(';') != std::string::npos ? ';' : ',';
    const auto fields = split(line, delim);
    auto fail = [&](const std::string& what) {
      return std::runtime_error(path + ":" + std::to_string(lineno) + ": " + what);
    };
    if (static_cast<Eigen::Index>(fields.size()) != kCols) {
      throw fail("expected 12 columns, found " + std::to_string(fields.size()));
    }
    double first;
    if (!header_seen && !parse_double(fields[0], first)) {
      header_seen = true;
      continue;
    }
    header_seen = true;
    for (std::size_t k = 0; k < fields.size(); ++k) {
      double v;
      if (!parse_double(fields[k], v)) {
        throw fail("malformed number '" + std::string(trim(fields[k])) + "' in column " +
                   std::to_string(k + 1));
      }
      values.push_back(v);
    }
  }
  const Eigen::Index n = static_cast<Eigen::Index>(values.size()) / kCols;
  if (n == 0) throw std::runtime_error(path + ": no data rows");
  const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
      table(values.data(), n, kCols);
  WineDataset d;
  d.features = table.leftCols(kCols - 1);
  d.quality = table.col(kCols - 1);
  d.targets = d.quality;
  Rng rng(seed);
  for (Eigen::Index i = 0; i < n; ++i) d.targets(i) += std::exp(rng.normal());
  return d;
}

MlpRegression::MlpRegression(std::shared_ptr<const WineDataset> data, MlpSpec spec, double lo,
                             double hi)
    : Problem("wine", BoxDomain::uniform(spec.param_count(), lo, hi)),
      data_(std::move(data)),
      spec_(spec) {
  if (!data_) throw std::invalid_argument("MlpRegression: missing dataset");
  if (data_->features.cols() != spec_.inputs || spec_.outputs != 1) {
    throw std::invalid_argument("MlpRegression: dataset does not match the network shape");
  }
}

std::unique_ptr<Problem> MlpRegression::clone() const {
  auto p = std::make_unique<MlpRegression>(*this);
  p->reset_evaluations();
  return p;
}

Var MlpRegression::fitness(const Var& population) const {
  Tape& t = *population.tape();
  const Var x = t.constant(data_->features);
  const Var y = t.constant(data_->targets);
  std::vector<Var> losses;
  losses.reserve(static_cast<std::size_t>(population.rows()));
  for (Eigen::Index i = 0; i < population.rows(); ++i) {
    losses.push_back(mse_loss(mlp_forward(row(population, i), x, spec_), y));
  }
  return concat_rows(losses);
}

}  // namespace diffmeta
