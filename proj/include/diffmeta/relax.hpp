#pragma once

// Reparameterized surrogates for random draws: pathwise Gaussians,
// Binary-Concrete (Gumbel-Sigmoid) masks and Gumbel-Softmax selection.
// Every function has an overload taking the raw noise explicitly so callers
// can draw once and replay the same noise (equivalence tests, gradchecks).

#include "diffmeta/tape.hpp"

#include <cstdint>
#include <random>

namespace diffmeta {

/// Seeded generator. A value type: copying it snapshots the stream.
class Rng {
 public:
  static constexpr double kUniformEps = 1e-12;

  explicit Rng(std::uint64_t seed = 0) : gen_(seed), seed_(seed) {}

  /// Uniform on the open interval (kUniformEps, 1 - kUniformEps).
  double uniform();
  double normal() { return normal_(gen_); }
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);

  Matrix uniform(Eigen::Index rows, Eigen::Index cols);
  Matrix normal(Eigen::Index rows, Eigen::Index cols);

  std::uint64_t seed() const { return seed_; }

 private:
  std::mt19937_64 gen_;
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uint64_t seed_;
};

struct RelaxConfig {
  double tau = 1.0;
  bool hard_forward = true;

  void validate() const;
};

/// log u - log(1 - u): a standard logistic variate.
double logistic_noise(double u);
Matrix logistic_noise(const Matrix& u);
double logit(double p);

/// mean + scale * z with z ~ N(0, I) of the mean's shape. `scale` is a
/// scalar or matches the mean; negative entries are rejected.
Var pathwise_gaussian(const Var& mean, const Var& scale, Rng& rng);
Var pathwise_gaussian(const Var& mean, const Var& scale, const Matrix& z);

/// Factor form: row i of the result is (mean + sigma * tril(l) * z_i)^T,
/// with z given as count x D rows. `mean` is D x 1, `sigma` 1 x 1.
Var pathwise_gaussian(const Var& mean, const Var& sigma, const Var& l, const Matrix& z);
Var pathwise_gaussian(const Var& mean, const Var& sigma, const Var& l, Eigen::Index count,
                      Rng& rng);

/// sigmoid((logistic(u) + alpha) / tau); with hard_forward the forward value
/// is the 0/1 threshold at 1/2 and the gradient follows the soft mask.
/// `alpha` is a scalar or has the shape of `u`.
Var gumbel_sigmoid(const Var& alpha, const RelaxConfig& cfg, const Matrix& u);
Var gumbel_sigmoid(const Var& alpha, const RelaxConfig& cfg, Rng& rng);

/// Row-wise softmax((logistic(u) + logits) / tau) (a column vector is one
/// distribution). hard_forward gives a straight-through one-hot at the
/// argmax. Logits may contain -inf to exclude categories.
Var gumbel_softmax(const Var& logits, const RelaxConfig& cfg, const Matrix& u);
Var gumbel_softmax(const Var& logits, const RelaxConfig& cfg, Rng& rng);

}  // namespace diffmeta
