#include <doctest.h>

#include "diffmeta/gradcheck.hpp"
#include "diffmeta/tape.hpp"

#include <cmath>
#include <random>

using namespace diffmeta;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed, double lo = -2.0,
                     double hi = 2.0) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = dist(gen);
  return m;
}

double check(Tape& t, const std::function<Var()>& f) { return check_gradients(t, f).max_rel_error; }

}  // namespace

TEST_CASE("elementwise forward values") {
  Tape t;
  CHECK(exp(t.constant(Matrix::Zero(3, 1))).value().isApprox(Matrix::Ones(3, 1)));
  CHECK(sigmoid(t.constant(0.0)).scalar() == 0.5);
  CHECK(sigmoid(t.constant(-800.0)).scalar() == 0.0);
  CHECK(sigmoid(t.constant(800.0)).scalar() == 1.0);
}

TEST_CASE("x sin x derivative matches central difference") {
  Tape t;
  Var x = t.parameter(Matrix::Constant(1, 1, 2.0), "x");
  Var y = x * sin(x);
  t.backward(y);
  const double h = 1e-5;
  const double fd = ((2.0 + h) * std::sin(2.0 + h) - (2.0 - h) * std::sin(2.0 - h)) / (2 * h);
  CHECK(relative_error(x.grad()(0), fd, 0.0) < 1e-6);
}

TEST_CASE("elementwise errors") {
  Tape t;
  Var a = t.constant(Matrix::Ones(2, 2));
  Var b = t.constant(Matrix::Ones(3, 1));
  CHECK_THROWS_AS(a + b, std::invalid_argument);
  CHECK_THROWS_AS(log(t.constant(-1.0)), std::domain_error);
  CHECK_THROWS_AS(sqrt(t.constant(-1e-300)), std::domain_error);
  CHECK_THROWS_AS(a / t.constant(0.0), std::domain_error);
  CHECK_NOTHROW(a * t.constant(3.0));
}

TEST_CASE("unary op gradients on random inputs") {
  using Fn = Var (*)(const Var&);
  const std::vector<std::pair<const char*, Fn>> ops = {
      {"neg", neg},   {"exp", exp},   {"expm1", expm1}, {"square", square},
      {"sin", sin},   {"cos", cos},   {"tanh", tanh},   {"sigmoid", sigmoid},
      {"abs", abs},
  };
  for (std::size_t k = 0; k < ops.size(); ++k) {
    Tape t;
    Var x = t.parameter(random_matrix(3, 2, 10 + k), "x");
    auto f = ops[k].second;
    INFO(ops[k].first);
    CHECK(check(t, [&] { return sum(f(x) * t.constant(random_matrix(3, 2, 99))); }) < 1e-4);
  }
  Tape t;
  Var x = t.parameter(random_matrix(3, 2, 5, 0.1, 2.0), "x");
  CHECK(check(t, [&] { return sum(log(x) + sqrt(x)); }) < 1e-4);
}

TEST_CASE("binary op gradients incl. scalar broadcast") {
  Tape t;
  Var a = t.parameter(random_matrix(2, 3, 1), "a");
  Var b = t.parameter(random_matrix(2, 3, 2, 0.5, 2.0), "b");
  Var s = t.parameter(Matrix::Constant(1, 1, 0.7), "s");
  CHECK(check(t, [&] { return sum(a + b * s - a / b); }) < 1e-4);
  CHECK(check(t, [&] { return sum(min(a, b) * max(a, s)); }) < 1e-4);
  CHECK(check(t, [&] { return sum(pow(b, s) + pow(b, 2.5) + s / b); }) < 1e-4);
  CHECK(check(t, [&] { return sum((s - a) * (2.0 - s)); }) < 1e-4);
}

TEST_CASE("reductions") {
  Tape t;
  Matrix v(3, 1);
  v << 3.0, 1.0, 2.0;
  Var x = t.parameter(v, "x");
  Var m = min_with_index(x);
  CHECK(m.scalar() == 1.0);
  CHECK(reduced_index(m) == 1);
  t.backward(m * 4.0);
  CHECK(x.grad().sum() == 4.0);
  CHECK(x.grad()(1) == 4.0);

  t.zero_grad();
  t.reset();
  t.backward(sum(x));
  CHECK(x.grad().isApprox(Matrix::Ones(3, 1)));

  t.reset();
  Var e = t.constant(Matrix(0, 1));
  CHECK_THROWS_AS(sum(e), std::invalid_argument);
  CHECK_THROWS_AS(min_with_index(e), std::invalid_argument);

  Matrix tie(3, 1);
  tie << 2.0, 1.0, 1.0;
  CHECK(reduced_index(min_with_index(t.constant(tie))) == 1);
  CHECK(reduced_index(max_with_index(t.constant(tie))) == 0);
}

TEST_CASE("mean of standard normal samples") {
  std::mt19937_64 gen(2024);
  std::normal_distribution<double> n01;
  Matrix z(100, 1);
  for (Eigen::Index i = 0; i < 100; ++i) z(i) = n01(gen);
  Tape t;
  CHECK(std::abs(mean(t.constant(z)).scalar()) < 3.0 / std::sqrt(100.0));
}

TEST_CASE("row reductions, softmax, noisy-or gradients") {
  Tape t;
  Var a = t.parameter(random_matrix(3, 4, 3), "a");
  Var p = t.parameter(random_matrix(3, 4, 4, 0.0, 0.9), "p");
  Var c = t.parameter(random_matrix(5, 1, 5), "c");
  const Matrix w = random_matrix(3, 4, 6);
  const Matrix wc = random_matrix(5, 1, 7);
  CHECK(check(t, [&] { return sum(row_sum(a) * row_mean(a)); }) < 1e-4);
  CHECK(check(t, [&] { return sum(softmax(a) * t.constant(w)); }) < 1e-4);
  CHECK(check(t, [&] { return sum(softmax(c) * t.constant(wc)); }) < 1e-4);
  CHECK(check(t, [&] { return sum(square(row_noisy_or(p))); }) < 1e-4);

  t.reset();
  CHECK(row_sum(softmax(a)).value().isApprox(Matrix::Ones(3, 1), 1e-12));
  Matrix q(1, 2);
  q << 0.5, 0.5;
  CHECK(row_noisy_or(t.constant(q)).scalar() == doctest::Approx(0.75));
}

TEST_CASE("linear algebra") {
  Tape t;
  Var l = t.parameter(random_matrix(3, 3, 8), "L");
  Var z = t.parameter(random_matrix(3, 1, 9), "z");
  Var m = t.parameter(random_matrix(3, 2, 10), "M");
  CHECK(lower_tri_matvec(t.constant(Matrix::Identity(3, 3)), z).value() == z.value());

  Matrix e1 = Matrix::Zero(3, 1), e2 = Matrix::Zero(3, 1);
  e1(0) = 1.0;
  e2(1) = 1.0;
  Matrix o = outer(t.constant(e1), t.constant(e2)).value();
  CHECK(o(0, 1) == 1.0);
  CHECK(o.sum() == 1.0);

  const Matrix w = random_matrix(3, 1, 11);
  auto r = check_gradients(t, [&] { return sum(lower_tri_matvec(l, z) * t.constant(w)); });
  CHECK(r.max_rel_error < 1e-5);
  t.backward(sum(lower_tri_matvec(l, z)));
  CHECK(l.grad()(0, 1) == 0.0);
  CHECK(l.grad()(0, 2) == 0.0);
  CHECK(l.grad()(1, 2) == 0.0);
  t.zero_grad();

  CHECK(check(t, [&] { return sum(square(matvec(l, z))); }) < 1e-4);
  CHECK(check(t, [&] { return sum(square(matmul(transpose(m), l))); }) < 1e-4);
  CHECK(check(t, [&] { return sum(tanh(outer(z, transpose(z)))); }) < 1e-4);

  t.reset();
  CHECK_THROWS_AS(matvec(l, m), std::invalid_argument);
  CHECK_THROWS_AS(matmul(m, m), std::invalid_argument);
  CHECK_THROWS_AS(lower_tri_matvec(m, z), std::invalid_argument);
}

TEST_CASE("clamp") {
  Tape t;
  Var x = t.parameter(Matrix::Constant(1, 1, 150.0), "x");
  Var y = clamp(x, -100.0, 100.0);
  CHECK(y.scalar() == 100.0);
  t.backward(y);
  CHECK(x.grad()(0) == 0.0);

  t.zero_grad();
  t.reset();
  x.set_value(Matrix::Zero(1, 1));
  y = clamp(x, -100.0, 100.0);
  CHECK(y.scalar() == 0.0);
  t.backward(y);
  CHECK(x.grad()(0) == 1.0);

  Vector lo(2), hi(2);
  lo << 0.0, -1.0;
  hi << 1.0, 1.0;
  Matrix pts(2, 2);
  pts << 2.0, 0.5, -3.0, -2.0;
  Matrix c = clamp(t.constant(pts), lo, hi).value();
  CHECK(c(0, 0) == 1.0);
  CHECK(c(0, 1) == 0.5);
  CHECK(c(1, 0) == 0.0);
  CHECK(c(1, 1) == -1.0);
  CHECK_THROWS_AS(clamp(t.constant(pts), hi, lo), std::invalid_argument);
}

TEST_CASE("detach") {
  Tape t;
  Var x = t.parameter(Matrix::Constant(1, 1, 3.0), "x");
  t.backward(x * detach(x));
  CHECK(x.grad()(0) == 3.0);

  t.zero_grad();
  t.reset();
  t.backward(sum(detach(x) * 5.0));
  CHECK(x.grad()(0) == 0.0);
}

TEST_CASE("straight-through") {
  Tape t;
  Var a = t.parameter(Matrix::Constant(1, 1, 0.3), "a");
  Var soft = sigmoid(a);
  Var st = straight_through(t.constant(1.0), soft);
  CHECK(st.scalar() == 1.0);
  t.backward(st * 2.0);
  const double via_st = a.grad()(0);
  t.zero_grad();
  t.reset();
  t.backward(sigmoid(a) * 2.0);
  CHECK(a.grad()(0) == via_st);
  CHECK_THROWS_AS(straight_through(t.constant(Matrix::Ones(2, 1)), a), std::invalid_argument);
}

TEST_CASE("structural ops gradients") {
  Tape t;
  Var a = t.parameter(random_matrix(4, 3, 12), "a");
  Var v = t.parameter(random_matrix(3, 1, 13), "v");
  Var c = t.parameter(random_matrix(4, 1, 14), "c");
  Var flat = t.parameter(random_matrix(6, 1, 15), "flat");
  const Matrix w = random_matrix(4, 3, 16);
  auto wc = [&] { return t.constant(w); };
  CHECK(check(t, [&] { return sum(broadcast_rows(v, 4) * wc()); }) < 1e-4);
  CHECK(check(t, [&] { return sum(broadcast_cols(c, 3) * wc()); }) < 1e-4);
  CHECK(check(t, [&] { return sum(square(add_row_vector(a, v))); }) < 1e-4);
  CHECK(check(t, [&] { return sum(square(row(a, 2))); }) < 1e-4);
  CHECK(check(t, [&] { return sum(square(middle_cols(a, 1, 2))); }) < 1e-4);
  CHECK(check(t, [&] { return sum(square(segment(flat, 2, 3))); }) < 1e-4);
  CHECK(check(t, [&] { return sum(reshape(flat, 2, 3) * t.constant(w.topRows(2))); }) < 1e-4);
  CHECK(check(t, [&] {
          return sum(square(concat_rows({transpose(v), row(a, 0), transpose(v)})));
        }) < 1e-4);

  t.reset();
  Matrix f(6, 1);
  f << 1, 2, 3, 4, 5, 6;
  Matrix r = reshape(t.constant(f), 2, 3).value();
  CHECK(r(0, 2) == 3.0);
  CHECK(r(1, 0) == 4.0);
  CHECK_THROWS_AS(reshape(t.constant(f), 4, 2), std::invalid_argument);
  CHECK_THROWS_AS(row(a, 4), std::out_of_range);
}

TEST_CASE("backward, zero_grad, reset") {
  Tape t;
  Matrix xv(3, 1), cv(3, 1);
  xv << 1, 2, 3;
  cv << 4, -5, 6;
  Var x = t.parameter(xv, "x");
  Var loss = sum(t.constant(cv) * x);
  t.backward(loss);
  CHECK(x.grad() == cv);
  t.backward(loss);
  CHECK(x.grad() == 2.0 * cv);
  t.zero_grad();
  CHECK_FALSE(x.has_grad());

  CHECK_THROWS_AS(t.backward(x), std::invalid_argument);
  CHECK_THROWS_AS(t.parameter(Matrix::Zero(1, 1)), std::logic_error);

  const std::size_t before = t.size();
  CHECK(before > 1);
  t.reset();
  CHECK(t.size() == t.parameter_count());
  CHECK(x.value() == xv);
  CHECK(x.trainable());
}

TEST_CASE("tape growth is linear in ops") {
  Tape t;
  Var x = t.parameter(Matrix::Ones(2, 2), "x");
  auto build = [&](int n) {
    t.reset();
    Var y = x;
    for (int i = 0; i < n; ++i) y = tanh(y);
    return t.size();
  };
  CHECK(build(10) - 1 == 10);
  CHECK(build(100) - 1 == 100);
}

TEST_CASE("determinism of forward and gradients") {
  auto run = [] {
    Tape t;
    Var a = t.parameter(random_matrix(3, 3, 21), "a");
    Var loss = sum(softmax(tanh(matmul(a, a))));
    t.backward(loss * loss);
    return std::pair{loss.scalar(), a.grad()};
  };
  auto [l1, g1] = run();
  auto [l2, g2] = run();
  CHECK(l1 == l2);
  CHECK(g1 == g2);
}

TEST_CASE("param reparameterizations") {
  Tape t;
  Param e(t, Matrix::Constant(1, 1, -50.0), "log_f", Reparam::Exp);
  Param s(t, Matrix::Constant(2, 1, -3.0), "sp", Reparam::Softplus);
  CHECK(e.read().scalar() > 0.0);
  CHECK(e.value()(0) == doctest::Approx(std::exp(-50.0)));
  CHECK((s.read().value().array() > 0.0).all());
  CHECK(s.read().value().isApprox(s.value()));
  s.assign(Matrix::Constant(2, 1, 0.25));
  CHECK(s.value()(1) == doctest::Approx(0.25));
  e.assign(Matrix::Constant(1, 1, 0.5));
  CHECK(e.raw().value()(0) == doctest::Approx(std::log(0.5)));
  CHECK_THROWS_AS(e.assign(Matrix::Constant(1, 1, -1.0)), std::domain_error);
  CHECK(check(t, [&] { return sum(square(s.read())) * e.read(); }) < 1e-4);
}
