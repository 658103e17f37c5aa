#include "diffmeta/gradsuite.hpp"

#include "diffmeta/diff.hpp"
#include "diffmeta/problems.hpp"
#include "diffmeta/relax.hpp"

#include <functional>

namespace diffmeta {

namespace {

using Build = std::function<Var(const std::vector<Var>&)>;

// Random weights contract the op output into a scalar, so every output
// entry carries a distinct upstream gradient.
GradCheckResult check_op(const std::vector<Matrix>& inputs, const Build& build) {
  Tape tape;
  std::vector<Var> params;
  for (std::size_t k = 0; k < inputs.size(); ++k) params.push_back(tape.parameter(inputs[k], "in" + std::to_string(k)));
  Matrix weights;
  return check_gradients(tape, [&] {
    const Var out = build(params);
    if (weights.size() == 0) {
      Rng rng(97);
      weights = rng.uniform(out.rows(), out.cols()).array() * 2.0 - 0.5;
    }
    return sum(tape.constant(weights) * out);
  });
}

Matrix uniform(Eigen::Index r, Eigen::Index c, double lo, double hi, std::uint64_t seed) {
  Rng rng(seed);
  return (lo + (hi - lo) * rng.uniform(r, c).array()).matrix();
}

Matrix away_from_zero(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  Matrix m = uniform(r, c, 0.3, 2.0, seed);
  Rng rng(seed + 1);
  for (Eigen::Index i = 0; i < m.size(); ++i)
    if (rng.uniform() < 0.5) m(i) = -m(i);
  return m;
}

GradCheckResult check_generation(Algorithm& a) {
  a.tape()->zero_grad();
  a.generation();  // initial evaluation
  a.update_state();
  a.tape()->zero_grad();
  a.generation();  // one committed step so velocities / L become nontrivial
  a.update_state();
  const Rng saved = a.rng();
  return check_gradients(*a.tape(), [&] {
    a.rng() = saved;
    return a.generation();
  });
}

}  // namespace

std::vector<GradSuiteItem> op_gradient_suite() {
  std::vector<GradSuiteItem> out;
  auto add = [&](std::string name, std::vector<Matrix> in, Build f) {
    out.push_back({std::move(name), check_op(in, f)});
  };
  const Matrix a = away_from_zero(3, 4, 1);
  const Matrix b = away_from_zero(3, 4, 2);
  const Matrix pos = uniform(3, 4, 0.2, 2.5, 3);
  const Matrix prob = uniform(3, 4, 0.05, 0.9, 4);
  const Matrix s = uniform(1, 1, 0.5, 1.5, 5);

  add("neg", {a}, [](auto& p) { return neg(p[0]); });
  add("exp", {a}, [](auto& p) { return exp(p[0]); });
  add("expm1", {a}, [](auto& p) { return expm1(p[0]); });
  add("log", {pos}, [](auto& p) { return log(p[0]); });
  add("sqrt", {pos}, [](auto& p) { return sqrt(p[0]); });
  add("square", {a}, [](auto& p) { return square(p[0]); });
  add("sin", {a}, [](auto& p) { return sin(p[0]); });
  add("cos", {a}, [](auto& p) { return cos(p[0]); });
  add("tanh", {a}, [](auto& p) { return tanh(p[0]); });
  add("sigmoid", {a}, [](auto& p) { return sigmoid(p[0]); });
  add("abs", {a}, [](auto& p) { return abs(p[0]); });
  add("add", {a, b}, [](auto& p) { return p[0] + p[1]; });
  add("sub", {a, b}, [](auto& p) { return p[0] - p[1]; });
  add("mul", {a, b}, [](auto& p) { return p[0] * p[1]; });
  add("div", {a, b}, [](auto& p) { return p[0] / p[1]; });
  add("pow", {pos, b}, [](auto& p) { return pow(p[0], p[1]); });
  add("pow scalar exponent", {pos}, [](auto& p) { return pow(p[0], 2.5); });
  add("min", {a, b}, [](auto& p) { return min(p[0], p[1]); });
  add("max", {a, b}, [](auto& p) { return max(p[0], p[1]); });
  add("scalar broadcast", {a, s}, [](auto& p) { return (p[0] * p[1]) / (p[1] + 1.0) - p[1]; });
  add("sum", {a}, [](auto& p) { return sum(square(p[0])); });
  add("mean", {a}, [](auto& p) { return mean(p[0] * p[0] * p[0]); });
  add("min_with_index", {a}, [](auto& p) { return min_with_index(p[0]); });
  add("max_with_index", {a}, [](auto& p) { return max_with_index(p[0]); });
  add("row_sum", {a}, [](auto& p) { return row_sum(p[0]); });
  add("row_mean", {a}, [](auto& p) { return row_mean(p[0]); });
  add("softmax rows", {a}, [](auto& p) { return softmax(p[0]); });
  add("softmax column", {uniform(5, 1, -2.0, 2.0, 6)}, [](auto& p) { return softmax(p[0]); });
  add("row_noisy_or", {prob}, [](auto& p) { return row_noisy_or(p[0]); });
  add("matvec", {a, uniform(4, 1, -1.0, 1.0, 7)}, [](auto& p) { return matvec(p[0], p[1]); });
  add("matmul", {a, uniform(4, 2, -1.0, 1.0, 8)}, [](auto& p) { return matmul(p[0], p[1]); });
  add("lower_tri_matvec", {uniform(4, 4, -1.0, 1.0, 9), uniform(4, 3, -1.0, 1.0, 10)},
      [](auto& p) { return lower_tri_matvec(p[0], p[1]); });
  add("outer", {uniform(3, 1, -1.0, 1.0, 11), uniform(4, 1, -1.0, 1.0, 12)},
      [](auto& p) { return outer(p[0], p[1]); });
  add("transpose", {a}, [](auto& p) { return transpose(p[0]); });
  add("clamp", {a}, [](auto& p) { return clamp(p[0], -1.0, 1.0); });
  add("broadcast_rows", {uniform(1, 4, -1.0, 1.0, 13)}, [](auto& p) { return broadcast_rows(p[0], 3); });
  add("broadcast_cols", {uniform(3, 1, -1.0, 1.0, 14)}, [](auto& p) { return broadcast_cols(p[0], 4); });
  add("add_row_vector", {a, uniform(4, 1, -1.0, 1.0, 15)}, [](auto& p) { return add_row_vector(p[0], p[1]); });
  add("row", {a}, [](auto& p) { return row(p[0], 1); });
  add("middle_cols", {a}, [](auto& p) { return middle_cols(p[0], 1, 2); });
  add("segment", {uniform(1, 12, -1.0, 1.0, 16)}, [](auto& p) { return segment(p[0], 3, 5); });
  add("reshape", {uniform(1, 12, -1.0, 1.0, 17)}, [](auto& p) { return reshape(p[0], 3, 4); });
  add("concat_rows", {uniform(1, 4, -1.0, 1.0, 18), uniform(1, 4, -1.0, 1.0, 19)},
      [](auto& p) { return concat_rows({p[0], p[1], square(p[0])}); });

  // relaxations with frozen noise (soft forward, the differentiable path)
  const RelaxConfig soft{0.7, false};
  const Matrix u = Rng(20).uniform(3, 4);
  add("pathwise gaussian", {a, pos}, [z = Rng(21).normal(3, 4)](auto& p) { return pathwise_gaussian(p[0], p[1], z); });
  add("pathwise gaussian factor", {uniform(3, 1, -1.0, 1.0, 22), s, uniform(3, 3, -1.0, 1.0, 23)},
      [z = Rng(24).normal(5, 3)](auto& p) { return pathwise_gaussian(p[0], p[1], p[2], z); });
  add("gumbel_sigmoid", {a}, [&](auto& p) { return gumbel_sigmoid(p[0], soft, u); });
  add("gumbel_softmax", {a}, [&](auto& p) { return gumbel_softmax(p[0], soft, u); });

  // objectives
  const Matrix x = uniform(3, 4, -2.0, 2.0, 25);
  add("sphere", {x}, [](auto& p) { return sphere(p[0]); });
  add("ackley", {x}, [](auto& p) { return ackley(p[0]); });
  add("griewank", {x}, [](auto& p) { return griewank(p[0]); });
  add("rosenbrock", {x}, [](auto& p) { return rosenbrock(p[0]); });
  add("michalewicz", {uniform(3, 4, 0.2, 3.0, 26)}, [](auto& p) { return michalewicz(p[0]); });
  const MlpSpec spec{3, 4, 1};
  add("mlp mse", {uniform(1, spec.param_count(), -1.0, 1.0, 27)}, [spec](auto& p) {
    Tape& t = *p[0].tape();
    const Var features = t.constant(uniform(6, 3, -1.0, 1.0, 28));
    const Var target = t.constant(uniform(6, 1, 3.0, 6.0, 29));
    return mse_loss(mlp_forward(p[0], features, spec), target);
  });
  return out;
}

std::vector<GradSuiteItem> algorithm_gradient_suite() {
  std::vector<GradSuiteItem> out;
  const RelaxConfig soft{1.0, false};
  {
    BenchmarkProblem p(Benchmark::Rosenbrock, 2, -3.0, 3.0);
    DiffPso a(p, DiffPsoConfig{DiffConfig{2, soft, LossMode::Min}}, 8);
    out.push_back({"pso-diff generation (N=2, D=2)", check_generation(a)});
  }
  {
    BenchmarkProblem p(Benchmark::Rosenbrock, 2, -2.0, 2.0);
    DiffGa a(p, DiffGaConfig{DiffConfig{3, soft, LossMode::Min}}, 5);
    out.push_back({"ga-diff generation (N=3, D=2)", check_generation(a)});
  }
  for (DeStrategy s : {DeStrategy::Rand1, DeStrategy::CurrentToBest1}) {
    BenchmarkProblem p(Benchmark::Rosenbrock, 2, -2.0, 2.0);
    DiffDeConfig cfg{DiffConfig{4, soft, LossMode::Min}};
    cfg.strategy = s;
    DiffDe a(p, cfg, 12);
    out.push_back({s == DeStrategy::Rand1 ? "de-diff generation rand/1 (N=4, D=2)"
                                          : "de-diff generation current-to-best/1 (N=4, D=2)",
                   check_generation(a)});
  }
  {
    BenchmarkProblem p(Benchmark::Rosenbrock, 3, -5.0, 5.0);
    DiffCmaesConfig cfg{DiffConfig{4, soft, LossMode::Min}};
    cfg.sigma0_fraction = 0.02;
    DiffCmaes a(p, cfg, 7);
    out.push_back({"cmaes-diff generation (D=3, lambda=4)", check_generation(a)});
  }
  return out;
}

std::vector<GradSuiteItem> gradient_suite() {
  std::vector<GradSuiteItem> out = op_gradient_suite();
  for (auto& item : algorithm_gradient_suite()) out.push_back(std::move(item));
  return out;
}

}  // namespace diffmeta
