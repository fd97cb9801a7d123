#pragma once

#include <string>
#include <vector>

#include "sddkit/gradcheck.hpp"

namespace sddkit::nn {

struct OpGradCheck {
  std::string name;
  GradCheckReport report;
};

// Finite-difference checks, in 64-bit mode, for every differentiable op:
// convolutions, residual unit, both norms in train phase (moving statistics
// held fixed), activations, the three loss families, and the composed head
// loss on a two-image batch. Deterministic per seed.
std::vector<OpGradCheck> run_gradient_suite(double tol, uint64_t seed = 7);

bool suite_passed(const std::vector<OpGradCheck>& results);

}  // namespace sddkit::nn
