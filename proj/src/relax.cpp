#include "diffmeta/relax.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace diffmeta {

double Rng::uniform() {
  double u = unit_(gen_);
  while (u <= kUniformEps || u >= 1.0 - kUniformEps) u = unit_(gen_);
  return u;
}

std::size_t Rng::index(std::size_t n) {
  if (n == 0) throw std::invalid_argument("Rng::index: empty range");
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(gen_);
}

Matrix Rng::uniform(Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  // Row-major fill so the draw order follows individuals, then coordinates.
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = uniform();
  return m;
}

Matrix Rng::normal(Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal();
  return m;
}

void RelaxConfig::validate() const {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw std::invalid_argument("relaxation temperature must be positive, got " +
                                std::to_string(tau));
  }
}

double logistic_noise(double u) { return std::log(u) - std::log1p(-u); }

Matrix logistic_noise(const Matrix& u) {
  return u.unaryExpr([](double x) { return logistic_noise(x); });
}

double logit(double p) { return std::log(p) - std::log1p(-p); }

Var pathwise_gaussian(const Var& mean, const Var& scale, const Matrix& z) {
  if (z.rows() != mean.rows() || z.cols() != mean.cols()) {
    throw std::invalid_argument("pathwise_gaussian: noise shape does not match the mean");
  }
  if (!scale.is_scalar() && (scale.rows() != mean.rows() || scale.cols() != mean.cols())) {
    throw std::invalid_argument("pathwise_gaussian: scale must be scalar or match the mean");
  }
  if ((scale.value().array() < 0.0).any()) {
    throw std::invalid_argument("pathwise_gaussian: negative scale");
  }
  return mean + scale * mean.tape()->constant(z);
}

Var pathwise_gaussian(const Var& mean, const Var& scale, Rng& rng) {
  return pathwise_gaussian(mean, scale, rng.normal(mean.rows(), mean.cols()));
}

Var pathwise_gaussian(const Var& mean, const Var& sigma, const Var& l, const Matrix& z) {
  const Eigen::Index d = mean.rows();
  if (mean.cols() != 1 || !sigma.is_scalar() || l.rows() != d || l.cols() != d ||
      z.cols() != d) {
    throw std::invalid_argument("pathwise_gaussian: factor form expects mean Dx1, sigma 1x1, "
                                "L DxD and z count x D");
  }
  if (sigma.scalar() < 0.0) throw std::invalid_argument("pathwise_gaussian: negative sigma");
  Tape& t = *mean.tape();
  Var lz = transpose(lower_tri_matvec(l, t.constant(z.transpose())));
  return add_row_vector(sigma * lz, mean);
}

Var pathwise_gaussian(const Var& mean, const Var& sigma, const Var& l, Eigen::Index count,
                      Rng& rng) {
  return pathwise_gaussian(mean, sigma, l, rng.normal(count, mean.rows()));
}

Var gumbel_sigmoid(const Var& alpha, const RelaxConfig& cfg, const Matrix& u) {
  cfg.validate();
  if (!alpha.is_scalar() && (alpha.rows() != u.rows() || alpha.cols() != u.cols())) {
    throw std::invalid_argument("gumbel_sigmoid: logits must be scalar or match the noise");
  }
  Tape& t = *alpha.tape();
  Var z = (t.constant(logistic_noise(u)) + alpha) / cfg.tau;
  Var soft = sigmoid(z);
  if (!cfg.hard_forward) return soft;
  // Threshold on the argument: exact for m > 1/2 without rounding in sigmoid.
  Matrix hard = (z.value().array() > 0.0).cast<double>();
  return straight_through(t.constant(std::move(hard)), soft);
}

Var gumbel_sigmoid(const Var& alpha, const RelaxConfig& cfg, Rng& rng) {
  return gumbel_sigmoid(alpha, cfg, rng.uniform(alpha.rows(), alpha.cols()));
}

Var gumbel_softmax(const Var& logits, const RelaxConfig& cfg, const Matrix& u) {
  cfg.validate();
  if (logits.rows() != u.rows() || logits.cols() != u.cols()) {
    throw std::invalid_argument("gumbel_softmax: noise shape does not match the logits");
  }
  const bool column = logits.cols() == 1;
  const Eigen::Index categories = column ? logits.rows() : logits.cols();
  if (categories < 2) throw std::invalid_argument("gumbel_softmax: needs at least 2 categories");
  Tape& t = *logits.tape();
  const Var perturbed = (t.constant(logistic_noise(u)) + logits) / cfg.tau;
  Var p = softmax(perturbed);
  if (!cfg.hard_forward) return p;
  // One-hot from the perturbed logits themselves; probabilities can tie
  // after rounding where the logits do not.
  const Matrix& z = perturbed.value();
  Matrix hard = Matrix::Zero(z.rows(), z.cols());
  if (column) {
    Eigen::Index k;
    z.col(0).maxCoeff(&k);
    hard(k, 0) = 1.0;
  } else {
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      Eigen::Index k;
      z.row(i).maxCoeff(&k);
      hard(i, k) = 1.0;
    }
  }
  return straight_through(t.constant(std::move(hard)), p);
}

Var gumbel_softmax(const Var& logits, const RelaxConfig& cfg, Rng& rng) {
  return gumbel_softmax(logits, cfg, rng.uniform(logits.rows(), logits.cols()));
}

}  // namespace diffmeta
