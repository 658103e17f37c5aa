#pragma once

// Central finite-difference verification of tape gradients.

#include "diffmeta/tape.hpp"

#include <functional>
#include <string>

namespace diffmeta {

struct GradCheckOptions {
  double step = 1e-5;
  // Denominator floor for the relative error, so entries whose true gradient
  // is ~0 are compared absolutely.
  double floor = 1e-6;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // "<param name>[index]" of the worst entry
  std::size_t entries = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

double relative_error(double analytic, double numeric, double floor);

/// `loss` rebuilds the scalar objective from the tape's parameters; it is
/// called after every `reset`, so it must be a pure function of the
/// parameter values (freeze any noise outside it). Leaves the tape reset
/// with cleared gradients.
GradCheckResult check_gradients(Tape& tape, const std::function<Var()>& loss,
                                const GradCheckOptions& opts = {});

}  // namespace diffmeta
