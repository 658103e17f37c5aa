#pragma once

// The finite-difference suite: every differentiable op, the relaxations, the
// objectives, and one full generation of each differentiable algorithm on a
// small instance with frozen noise.

#include "diffmeta/gradcheck.hpp"

#include <string>
#include <vector>

namespace diffmeta {

struct GradSuiteItem {
  std::string name;
  GradCheckResult result;
};

std::vector<GradSuiteItem> op_gradient_suite();
std::vector<GradSuiteItem> algorithm_gradient_suite();
std::vector<GradSuiteItem> gradient_suite();

}  // namespace diffmeta
