#pragma once

// Objectives. Populations are N x D matrices with one individual per row;
// every evaluation returns an N x 1 fitness column and advances the
// problem's evaluation counter by N.

#include "diffmeta/tape.hpp"

#include <cstdint>
#include <memory>
#include <string>

namespace diffmeta {

class Rng;

struct BoxDomain {
  Vector lower;
  Vector upper;

  static BoxDomain uniform(Eigen::Index dim, double lo, double hi);
  Eigen::Index dim() const { return lower.size(); }
  Vector width() const { return upper - lower; }
  void validate() const;
  bool contains(const Matrix& population) const;
  /// Uniform sample of `count` rows inside the box.
  Matrix sample(Eigen::Index count, Rng& rng) const;
};

class Problem {
 public:
  Problem(std::string name, BoxDomain domain);
  virtual ~Problem() = default;

  const std::string& name() const { return name_; }
  Eigen::Index dimension() const { return domain_.dim(); }
  const BoxDomain& domain() const { return domain_; }

  /// On-tape fitness of every row of `population`.
  Var evaluate(const Var& population);
  /// Same values without recording gradients.
  Vector evaluate(const Matrix& population);

  std::uint64_t evaluations() const { return evaluations_; }
  void reset_evaluations() { evaluations_ = 0; }

  virtual std::unique_ptr<Problem> clone() const = 0;

 protected:
  virtual Var fitness(const Var& population) const = 0;

 private:
  std::string name_;
  BoxDomain domain_;
  std::uint64_t evaluations_ = 0;
};

// Benchmarks on a rows-as-points matrix; each returns an N x 1 column.
Var sphere(const Var& x);
/// a = 20, b = 0.2, c = 2 pi
Var ackley(const Var& x);
/// sum x^2 / 4000 - prod cos(x_i / sqrt(i)) + 1
Var griewank(const Var& x);
Var rosenbrock(const Var& x);
/// -sum sin(x_i) sin(i x_i^2 / pi)^(2m)
Var michalewicz(const Var& x, int m = 10);

enum class Benchmark { Sphere, Ackley, Griewank, Rosenbrock, Michalewicz };

Benchmark parse_benchmark(const std::string& name);
const char* benchmark_name(Benchmark b);

class BenchmarkProblem final : public Problem {
 public:
  BenchmarkProblem(Benchmark kind, Eigen::Index dim, double lo = -100.0, double hi = 100.0);
  Benchmark kind() const { return kind_; }
  std::unique_ptr<Problem> clone() const override;

 protected:
  Var fitness(const Var& population) const override;

 private:
  Benchmark kind_;
};

std::unique_ptr<Problem> make_benchmark(const std::string& name, Eigen::Index dim,
                                        double lo = -100.0, double hi = 100.0);

// ---- neural-network regression ---------------------------------------------

struct MlpSpec {
  Eigen::Index inputs = 11;
  Eigen::Index hidden = 128;
  Eigen::Index outputs = 1;

  Eigen::Index param_count() const { return inputs * hidden + hidden + hidden * outputs + outputs; }
};

/// Predictions (n x outputs) of a one-hidden-layer tanh network. `params` is a
/// flat vector (row or column) unpacked as W1 (inputs x hidden, row-major),
/// b1, W2 (hidden x outputs, row-major), b2.
Var mlp_forward(const Var& params, const Var& features, const MlpSpec& spec = {});
Var mse_loss(const Var& pred, const Var& target);

struct WineDataset {
  Matrix features;  // n x 11
  Vector targets;   // quality + exp(N(0, 1))
  Vector quality;   // unperturbed column

  Eigen::Index rows() const { return features.rows(); }
};

/// Reads the UCI red-wine file (header row, 12 numeric columns, ';' or ','
/// separated) and perturbs the quality column with log-normal noise drawn
/// from `seed`.
WineDataset load_wine(const std::string& path, std::uint64_t seed);

/// Full-batch MSE of an MLP; each individual is a flat parameter vector.
class MlpRegression final : public Problem {
 public:
  MlpRegression(std::shared_ptr<const WineDataset> data, MlpSpec spec = {}, double lo = -10.0,
                double hi = 10.0);
  const WineDataset& data() const { return *data_; }
  const MlpSpec& spec() const { return spec_; }
  std::unique_ptr<Problem> clone() const override;

 protected:
  Var fitness(const Var& population) const override;

 private:
  std::shared_ptr<const WineDataset> data_;
  MlpSpec spec_;
};

}  // namespace diffmeta
