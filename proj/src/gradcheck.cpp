#include "diffmeta/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace diffmeta {

double relative_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

GradCheckResult check_gradients(Tape& tape, const std::function<Var()>& loss,
                                const GradCheckOptions& opts) {
  tape.reset();
  tape.zero_grad();
  tape.backward(loss());
  std::vector<Var> params = tape.parameters();
  std::vector<Matrix> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) analytic.push_back(p.grad());

  auto eval = [&] {
    tape.reset();
    return loss().scalar();
  };

  GradCheckResult out;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Var& p = params[k];
    Matrix x = p.value();
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double saved = x(i);
      x(i) = saved + opts.step;
      p.set_value(x);
      const double fp = eval();
      x(i) = saved - opts.step;
      p.set_value(x);
      const double fm = eval();
      x(i) = saved;
      p.set_value(x);
      const double numeric = (fp - fm) / (2.0 * opts.step);
      const double a = analytic[k](i);
      const double err = relative_error(a, numeric, opts.floor);
      ++out.entries;
      if (err > out.max_rel_error || !std::isfinite(err)) {
        out.max_rel_error = std::isfinite(err) ? err : INFINITY;
        out.worst = tape.node(p.id()).name + "[" + std::to_string(i) + "]";
        out.analytic = a;
        out.numeric = numeric;
      }
    }
  }
  tape.reset();
  tape.zero_grad();
  return out;
}

}  // namespace diffmeta
