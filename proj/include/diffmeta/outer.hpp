#pragma once

// Outer gradient loop: Adam over tape parameters, plateau learning-rate
// schedule, and the generation / backward / step / commit cycle.

#include "diffmeta/algorithm.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace diffmeta {

struct AdamConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  /// Bias-corrected update of every parameter from its accumulated gradient.
  /// Throws std::runtime_error naming the first parameter with a non-finite
  /// gradient (nothing is updated in that case).
  void step(const std::vector<Var>& params);

  double lr() const { return cfg_.lr; }
  void set_lr(double lr) { cfg_.lr = lr; }
  long steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::vector<Matrix> m_, v_;
  long t_ = 0;
};

struct PlateauConfig {
  long patience = 100;
  double factor = 0.5;
  double min_lr = 1e-5;
  double threshold = 1e-12;
};

/// Halves the learning rate after `patience` consecutive generations
/// (counting the one that set the best value) without an improvement larger
/// than `threshold`.
class PlateauScheduler {
 public:
  explicit PlateauScheduler(PlateauConfig cfg = {}) : cfg_(cfg) {}

  double step(double metric, double lr);
  double best() const { return best_; }
  long since_improvement() const { return since_; }

 private:
  PlateauConfig cfg_;
  double best_ = INFINITY;
  long since_ = 0;
};

struct OuterConfig {
  AdamConfig adam;
  bool schedule = true;
  PlateauConfig plateau;
};

struct RunRecord {
  int run = 0;
  long generation = 0;
  std::uint64_t n_evals = 0;
  double best_fitness = 0.0;
  double lr = 0.0;
  std::vector<Hyper> hyper;
};

struct RunResult {
  std::vector<RunRecord> records;
  bool failed = false;
  std::string error;
  double seconds = 0.0;

  double final_best() const { return records.empty() ? INFINITY : records.back().best_fitness; }
};

/// Runs generations until `max_evals` evaluations are spent. Errors end the
/// run; the records gathered so far are returned with `failed` set.
RunResult run_loop(Algorithm& algo, std::uint64_t max_evals, const OuterConfig& outer = {},
                   int run_id = 0);

}  // namespace diffmeta
