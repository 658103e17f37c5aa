#include <doctest.h>

#include "diffmeta/gradcheck.hpp"
#include "diffmeta/relax.hpp"

#include <cmath>

using namespace diffmeta;

TEST_CASE("rng uniforms stay inside the open interval and replay") {
  Rng a(42);
  Rng b = a;
  for (int i = 0; i < 10000; ++i) {
    const double u = a.uniform();
    CHECK(u > Rng::kUniformEps);
    CHECK(u < 1.0 - Rng::kUniformEps);
    CHECK(u == b.uniform());
  }
  CHECK(std::isfinite(logistic_noise(Rng::kUniformEps * 1.0000001)));
  CHECK(a.index(7) < 7);
  CHECK_THROWS(a.index(0));
}

TEST_CASE("relax config validation") {
  const RelaxConfig zero{0.0, true};
  const RelaxConfig negative{-1.0, false};
  CHECK_THROWS_AS(zero.validate(), std::invalid_argument);
  CHECK_THROWS_AS(negative.validate(), std::invalid_argument);
  CHECK_NOTHROW(RelaxConfig{}.validate());
}

TEST_CASE("pathwise gaussian") {
  Tape t;
  Rng rng(1);
  Var mu = t.parameter(Matrix::Constant(4, 1, 2.5), "mean");
  Var scale = t.parameter(Matrix::Zero(4, 1), "scale");
  CHECK(pathwise_gaussian(mu, scale, rng).value() == mu.value());
  CHECK_THROWS_AS(pathwise_gaussian(mu, t.constant(-1.0), rng), std::invalid_argument);

  Var m0 = t.constant(Matrix::Zero(100000, 1));
  Var x = pathwise_gaussian(m0, t.constant(1.0), rng);
  CHECK(std::abs(mean(x).scalar()) < 3.0 / std::sqrt(1e5));
}

TEST_CASE("pathwise gaussian gradients on frozen noise") {
  Tape t;
  Rng rng(2);
  const Matrix z = rng.normal(3, 1);
  Var mu = t.parameter(Matrix::Constant(3, 1, 0.3), "mu");
  Var s = t.parameter(Matrix::Constant(3, 1, 0.8), "s");
  // f(x) = sum sin(x): d/dmu = cos(x) at the sample
  auto r = check_gradients(t, [&] { return sum(sin(pathwise_gaussian(mu, s, z))); });
  CHECK(r.max_rel_error < 1e-4);
  t.backward(sum(sin(pathwise_gaussian(mu, s, z))));
  const Matrix xs = mu.value() + s.value().cwiseProduct(z);
  CHECK(mu.grad().isApprox(Matrix(xs.array().cos()), 1e-12));
}

TEST_CASE("pathwise gaussian factor form") {
  Tape t;
  Rng rng(3);
  Var mu = t.parameter(Matrix::Constant(3, 1, 1.0), "mu");
  Var sg = t.parameter(Matrix::Constant(1, 1, 0.5), "sigma");
  Var l = t.parameter(Matrix::Identity(3, 3) + Matrix::Constant(3, 3, 0.2), "L");
  const Matrix z = rng.normal(4, 3);
  Var x = pathwise_gaussian(mu, sg, l, z);
  CHECK(x.rows() == 4);
  CHECK(x.cols() == 3);
  Matrix lower = l.value().triangularView<Eigen::Lower>();
  Vector expect = mu.value().col(0) + 0.5 * lower * z.row(2).transpose();
  CHECK(x.value().row(2).transpose().isApprox(expect, 1e-14));
  const Matrix at_mean = pathwise_gaussian(mu, sg, l, Matrix::Zero(4, 3)).value();
  CHECK(at_mean == mu.value().transpose().replicate(4, 1));
  const Matrix w = rng.normal(4, 3);
  auto r = check_gradients(
      t, [&] { return sum(square(pathwise_gaussian(mu, sg, l, z)) * t.constant(w)); });
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("gumbel sigmoid saturation and hard values") {
  Tape t;
  Rng rng(4);
  Var a = t.constant(Matrix::Constant(1000, 1, 50.0));
  Var m = gumbel_sigmoid(a, RelaxConfig{}, rng);
  CHECK((m.value().array() == 1.0).all());
  Var b = t.constant(Matrix::Zero(1000, 1));
  Matrix h = gumbel_sigmoid(b, RelaxConfig{}, rng).value();
  CHECK(((h.array() == 0.0) || (h.array() == 1.0)).all());
  Matrix s = gumbel_sigmoid(b, RelaxConfig{1.0, false}, rng).value();
  CHECK(((s.array() > 0.0) && (s.array() < 1.0)).all());
}

TEST_CASE("hard gumbel sigmoid is Bernoulli(sigmoid(alpha)) for any tau") {
  const int n = 100000;
  for (double alpha : {-2.0, 0.0, 2.0}) {
    for (double tau : {0.3, 1.0, 4.0}) {
      Tape t;
      Rng rng(100 + static_cast<std::uint64_t>(alpha * 10 + tau * 100));
      Var a = t.constant(Matrix::Constant(n, 1, alpha));
      const double freq = gumbel_sigmoid(a, RelaxConfig{tau, true}, rng).value().mean();
      const double p = 1.0 / (1.0 + std::exp(-alpha));
      CAPTURE(alpha);
      CAPTURE(tau);
      CHECK(std::abs(freq - p) < 3.0 * std::sqrt(p * (1 - p) / n));
    }
  }
}

TEST_CASE("gumbel sigmoid gradient is nonzero and matches finite differences") {
  Tape t;
  Rng rng(5);
  const Matrix u = rng.uniform(5, 1);
  Var a = t.parameter(Matrix::Constant(5, 1, 0.4), "alpha");
  const Matrix w = rng.normal(5, 1);
  auto f = [&] { return sum(gumbel_sigmoid(a, RelaxConfig{0.7, false}, u) * t.constant(w)); };
  CHECK(check_gradients(t, f).max_rel_error < 1e-4);
  t.backward(sum(gumbel_sigmoid(a, RelaxConfig{0.7, true}, u)));
  CHECK((a.grad().array() != 0.0).all());
}

TEST_CASE("gumbel softmax") {
  Tape t;
  Rng rng(6);
  Matrix lg(1, 3);
  lg << 50.0, 0.0, 0.0;
  Var p = gumbel_softmax(t.constant(lg), RelaxConfig{1.0, false}, rng);
  CHECK(p.value()(0, 0) > 0.999);

  Var q = gumbel_softmax(t.constant(rng.normal(20, 6) * 5.0), RelaxConfig{0.2, false}, rng);
  CHECK((q.value().rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
  CHECK((q.value().array() >= 0.0).all());

  Var h = gumbel_softmax(t.constant(rng.normal(20, 6)), RelaxConfig{}, rng);
  CHECK((h.value().rowwise().sum().array() == 1.0).all());
  CHECK((h.value().rowwise().maxCoeff().array() == 1.0).all());

  Var single = t.constant(Matrix::Zero(3, 1).transpose().leftCols(1));
  CHECK_THROWS_AS(gumbel_softmax(single, RelaxConfig{}, rng), std::invalid_argument);
}

TEST_CASE("gumbel softmax argmax is uniform for zero logits") {
  const int n = 100000, k = 5;
  Tape t;
  Rng rng(7);
  Matrix h = gumbel_softmax(t.constant(Matrix::Zero(n, k)), RelaxConfig{}, rng).value();
  const double p = 1.0 / k;
  for (Eigen::Index j = 0; j < k; ++j) {
    const double freq = h.col(j).mean();
    CHECK(std::abs(freq - p) < 3.0 * std::sqrt(p * (1 - p) / n));
  }
}

TEST_CASE("gumbel softmax gradients with masked categories") {
  Tape t;
  Rng rng(8);
  const Matrix u = rng.uniform(3, 4);
  Matrix mask = Matrix::Zero(3, 4);
  mask(0, 0) = -INFINITY;
  mask(1, 1) = -INFINITY;
  Var lg = t.parameter(rng.normal(3, 4), "logits");
  const Matrix w = rng.normal(3, 4);
  auto f = [&] {
    return sum(gumbel_softmax(lg + t.constant(mask), RelaxConfig{0.5, false}, u) *
               t.constant(w));
  };
  CHECK(check_gradients(t, f).max_rel_error < 1e-4);
  t.reset();
  Matrix p = gumbel_softmax(lg + t.constant(mask), RelaxConfig{}, u).value();
  CHECK(p(0, 0) == 0.0);
  CHECK(p(1, 1) == 0.0);
}
