#pragma once

// Common interface driven by the optimisation loop.

#include "diffmeta/relax.hpp"
#include "diffmeta/tape.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace diffmeta {

struct Hyper {
  std::string name;
  double value = 0.0;
};

class Algorithm {
 public:
  virtual ~Algorithm() = default;

  virtual std::string name() const = 0;
  virtual bool differentiable() const = 0;
  virtual Eigen::Index population_size() const = 0;

  /// Runs one generation. Differentiable algorithms return the scalar loss
  /// recorded on their tape and defer the commit to `update_state`;
  /// classical ones finish the generation and return an unbound Var.
  virtual Var generation() = 0;
  /// Writes the staged generation into the persistent state and resets the
  /// tape. Classical algorithms have nothing to commit.
  virtual void update_state() {}

  /// Tape holding the trainable parameters (null for classical algorithms).
  virtual Tape* tape() { return nullptr; }
  virtual Rng& rng() = 0;

  /// Best fitness over every point evaluated so far.
  virtual double best_fitness() const = 0;
  virtual Vector best_solution() const = 0;
  virtual std::uint64_t evaluations() const = 0;
  /// Scalar snapshot of the (possibly learned) hyperparameters.
  virtual std::vector<Hyper> hyperparameters() const = 0;
};

}  // namespace diffmeta
