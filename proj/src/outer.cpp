#include "diffmeta/outer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

namespace diffmeta {

void Adam::step(const std::vector<Var>& params) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.push_back(Matrix::Zero(p.rows(), p.cols()));
      v_.push_back(Matrix::Zero(p.rows(), p.cols()));
    }
  }
  if (m_.size() != params.size()) throw std::logic_error("adam: parameter set changed");
  std::vector<Matrix> grads;
  grads.reserve(params.size());
  for (const auto& p : params) {
    grads.push_back(p.grad());
    if (!grads.back().allFinite()) {
      throw std::runtime_error("non-finite gradient in parameter '" +
                               p.tape()->node(p.id()).name + "'");
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Matrix& g = grads[k];
    m_[k] = cfg_.beta1 * m_[k] + (1.0 - cfg_.beta1) * g;
    v_[k] = cfg_.beta2 * v_[k] + (1.0 - cfg_.beta2) * g.cwiseAbs2();
    if (cfg_.lr == 0.0) continue;
    const auto mhat = m_[k].array() / c1;
    const auto vhat = v_[k].array() / c2;
    params[k].set_value(params[k].value().array() - cfg_.lr * mhat / (vhat.sqrt() + cfg_.eps));
  }
}

double PlateauScheduler::step(double metric, double lr) {
  if (metric < best_ - cfg_.threshold) {
    best_ = metric;
    since_ = 0;
  }
  if (++since_ >= cfg_.patience) {
    since_ = 0;
    // never lifts a rate that is already at or below the floor (e.g. lr = 0)
    if (lr > cfg_.min_lr) lr = std::max(lr * cfg_.factor, cfg_.min_lr);
  }
  return lr;
}

RunResult run_loop(Algorithm& algo, std::uint64_t max_evals, const OuterConfig& outer,
                   int run_id) {
  if (max_evals == 0) throw std::invalid_argument("run_loop: budget must be positive");
  if (static_cast<std::int64_t>(max_evals) < algo.population_size()) {
    throw std::invalid_argument("run_loop: budget smaller than the population");
  }
  const auto start = std::chrono::steady_clock::now();
  RunResult out;
  Adam adam(outer.adam);
  PlateauScheduler sched(outer.plateau);
  long gen = 0;
  try {
    while (algo.evaluations() < max_evals) {
      double lr = 0.0;
      if (algo.differentiable()) {
        Tape& tape = *algo.tape();
        tape.zero_grad();
        const Var loss = algo.generation();
        tape.backward(loss);
        adam.step(tape.parameters());
        if (outer.schedule) adam.set_lr(sched.step(algo.best_fitness(), adam.lr()));
        lr = adam.lr();
        algo.update_state();
      } else {
        algo.generation();
      }
      out.records.push_back(
          {run_id, gen++, algo.evaluations(), algo.best_fitness(), lr, algo.hyperparameters()});
    }
  } catch (const std::exception& e) {
    out.failed = true;
    out.error = e.what();
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

}  // namespace diffmeta
