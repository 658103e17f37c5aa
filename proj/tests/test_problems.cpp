#include <doctest.h>

#include "diffmeta/gradcheck.hpp"
#include "diffmeta/problems.hpp"
#include "diffmeta/relax.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace diffmeta;

#ifndef DIFFMETA_DATA_DIR
#define DIFFMETA_DATA_DIR "data"
#endif

namespace {

const std::string kWine = std::string(DIFFMETA_DATA_DIR) + "/winequality-red.csv";

double value_at(Var (*f)(const Var&), const Matrix& x) {
  Tape t;
  return f(t.constant(x)).scalar();
}

std::string write_temp(const std::string& name, const std::string& body) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream(path) << body;
  return path.string();
}

}  // namespace

TEST_CASE("benchmark global minima") {
  CHECK(value_at(ackley, Matrix::Zero(1, 7)) == 0.0);
  CHECK(value_at(rosenbrock, Matrix::Ones(1, 7)) == 0.0);
  CHECK(value_at(griewank, Matrix::Zero(1, 7)) == 0.0);
  CHECK(value_at(sphere, Matrix::Zero(1, 7)) == 0.0);
  Tape t;
  CHECK(michalewicz(t.constant(Matrix::Zero(1, 7))).scalar() == 0.0);
}

TEST_CASE("benchmark values against high-precision references") {
  Matrix x(1, 4);
  x << 1.5, -0.7, 2.25, -3.1;
  CHECK(value_at(ackley, x) == doctest::Approx(8.6590944457953668903).epsilon(1e-14));
  CHECK(value_at(griewank, x) == doctest::Approx(1.0040056686935516351).epsilon(1e-14));
  CHECK(value_at(rosenbrock, x) == doctest::Approx(7847.353125).epsilon(1e-14));
  Tape t;
  CHECK(michalewicz(t.constant(x)).scalar() ==
        doctest::Approx(-0.67053797300513621587).epsilon(1e-13));
}

TEST_CASE("benchmark gradients at random interior points") {
  Rng rng(11);
  for (const char* name : {"sphere", "ackley", "griewank", "rosenbrock", "michalewicz"}) {
    Tape t;
    const Matrix x0 = (rng.uniform(3, 6).array() * 4.0 - 2.0).matrix();
    Var x = t.parameter(x0, "x");
    auto prob = make_benchmark(name, 6);
    CAPTURE(name);
    auto r = check_gradients(t, [&] { return sum(prob->evaluate(x)); });
    CHECK(r.max_rel_error < 1e-5);
  }
}

TEST_CASE("benchmarks are finite on the box") {
  Rng rng(12);
  const BoxDomain box = BoxDomain::uniform(10, -100.0, 100.0);
  for (const char* name : {"ackley", "griewank", "rosenbrock", "michalewicz"}) {
    auto prob = make_benchmark(name, 10);
    for (int batch = 0; batch < 25; ++batch) {
      const Vector f = prob->evaluate(box.sample(40000, rng));
      CAPTURE(name);
      REQUIRE(f.allFinite());
    }
    CHECK(prob->evaluations() == 1000000);
  }
}

TEST_CASE("dimension checks and counters") {
  auto prob = make_benchmark("ackley", 3);
  Tape t;
  CHECK_THROWS_AS(prob->evaluate(t.constant(Matrix::Zero(2, 4))), std::invalid_argument);
  prob->evaluate(t.constant(Matrix::Zero(5, 3)));
  CHECK(prob->evaluations() == 5);
  prob->evaluate(Matrix::Zero(2, 3));
  CHECK(prob->evaluations() == 7);
  auto copy = prob->clone();
  CHECK(copy->evaluations() == 0);
  CHECK_THROWS_AS(make_benchmark("rastrigin", 3), std::invalid_argument);
  CHECK_THROWS_AS(make_benchmark("rosenbrock", 1), std::invalid_argument);
  CHECK_THROWS_AS(BoxDomain::uniform(2, 1.0, 1.0), std::invalid_argument);
}

TEST_CASE("mlp forward") {
  const MlpSpec full;
  CHECK(full.param_count() == 1665);
  Tape t;
  Rng rng(13);
  Var feats = t.constant(rng.normal(6, 11));
  CHECK(mlp_forward(t.constant(Matrix::Zero(1665, 1)), feats).value() == Matrix::Zero(6, 1));
  CHECK_THROWS_AS(mlp_forward(t.constant(Matrix::Zero(1664, 1)), feats), std::invalid_argument);

  const MlpSpec one{2, 1, 1};
  Matrix p1(5, 1);
  p1 << 0.5, -0.25, 0.1, 2.0, -1.0;
  Matrix x(1, 2);
  x << 1.0, 2.0;
  CHECK(mlp_forward(t.constant(p1), t.constant(x), one).scalar() ==
        doctest::Approx(-0.8006640107500884).epsilon(1e-15));

  const MlpSpec two{2, 2, 1};
  Matrix p2(1, 9);
  p2 << 0.3, -0.2, 0.5, 0.1, 0.05, -0.4, 1.5, -2.0, 0.25;
  Matrix x2(1, 2);
  x2 << 1.0, -2.0;
  CHECK(mlp_forward(t.constant(p2), t.constant(x2), two).scalar() ==
        doctest::Approx(0.7205685914080224).epsilon(1e-15));
}

TEST_CASE("mlp is stable under repeated evaluation") {
  Tape t;
  Rng rng(14);
  Var feats = t.constant(rng.normal(8, 11));
  Var params = t.constant(rng.normal(1665, 1));
  CHECK(mlp_forward(params, feats).value() == mlp_forward(params, feats).value());
}

TEST_CASE("mse loss") {
  Tape t;
  Matrix p = Matrix::Zero(2, 1), y(2, 1);
  y << 1.0, 3.0;
  CHECK(mse_loss(t.constant(y), t.constant(y)).scalar() == 0.0);
  CHECK(mse_loss(t.constant(p), t.constant(y)).scalar() == 5.0);
  CHECK_THROWS_AS(mse_loss(t.constant(Matrix(0, 1)), t.constant(Matrix(0, 1))),
                  std::invalid_argument);
  CHECK_THROWS_AS(mse_loss(t.constant(p), t.constant(Matrix::Zero(3, 1))), std::invalid_argument);

  Matrix q(3, 1), z(3, 1);
  q << 0.5, -1.0, 2.0;
  z << 1.0, 1.0, 1.0;
  t.reset();
  Var pv = t.parameter(q, "pred");
  t.backward(mse_loss(pv, t.constant(z)));
  CHECK(pv.grad().isApprox(2.0 * (q - z) / 3.0, 1e-15));
  t.zero_grad();
  CHECK(check_gradients(t, [&] { return mse_loss(pv, t.constant(z)); }).max_rel_error < 1e-6);
}

TEST_CASE("wine dataset loading") {
  const WineDataset a = load_wine(kWine, 5);
  CHECK(a.rows() == 1599);
  CHECK(a.features.cols() == 11);
  CHECK(a.features(0, 0) == 7.4);
  CHECK(a.quality(0) == 5.0);
  CHECK((a.targets.array() > a.quality.array()).all());
  const WineDataset b = load_wine(kWine, 5);
  CHECK(a.targets == b.targets);
  const WineDataset c = load_wine(kWine, 6);
  CHECK(a.targets != c.targets);
}

TEST_CASE("wine loader errors") {
  CHECK_THROWS_WITH_AS(load_wine("/nonexistent/wine.csv", 1),
                       doctest::Contains("cannot open"), std::runtime_error);
  const std::string header = "\"a\";\"b\";\"c\";\"d\";\"e\";\"f\";\"g\";\"h\";\"i\";\"j\";\"k\";\"q\"\n";
  const auto short_row = write_temp("dm_short.csv", header + "1;2;3\n");
  CHECK_THROWS_WITH_AS(load_wine(short_row, 1), doctest::Contains(":2: expected 12 columns"),
                       std::runtime_error);
  const auto bad = write_temp("dm_bad.csv", header + "1;2;3;4;5;6;7;8;9;10;11;5\n1;2;x;4;5;6;7;8;9;10;11;5\n");
  CHECK_THROWS_WITH_AS(load_wine(bad, 1), doctest::Contains(":3: malformed number 'x'"),
                       std::runtime_error);
  const auto commas = write_temp("dm_comma.csv", "1,2,3,4,5,6,7,8,9,10,11,5\r\n\n");
  CHECK(load_wine(commas, 1).rows() == 1);
}

TEST_CASE("wine MSE gradient on sampled parameters") {
  auto data = std::make_shared<WineDataset>(load_wine(kWine, 3));
  MlpRegression prob(data);
  CHECK(prob.dimension() == 1665);
  Rng rng(15);
  const Matrix x0 = rng.normal(1, 1665) * 0.1;
  Tape t;
  Var x = t.parameter(x0, "params");
  t.backward(sum(prob.evaluate(x)));
  const Matrix g = x.grad();
  CHECK(prob.evaluations() == 1);
  const double h = 1e-5;
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    const Eigen::Index i = static_cast<Eigen::Index>(rng.index(1665));
    Matrix xp = x0, xm = x0;
    xp(i) += h;
    xm(i) -= h;
    const double fd = (prob.evaluate(xp)(0) - prob.evaluate(xm)(0)) / (2 * h);
    worst = std::max(worst, relative_error(g(i), fd, 1e-6));
  }
  CHECK(worst < 1e-4);
}
