#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace sddkit::nn {

struct GradCheckReport {
  bool pass = false;
  bool finite = true;      // false when f produced NaN/Inf during probing
  double max_rel_err = 0;  // |analytic - numeric| / max(1, |analytic|, |numeric|)
  size_t worst_coord = 0;
  size_t coords_checked = 0;
  double tol = 0;
};

using ScalarFn = std::function<double(std::span<const double>)>;

// Central differences, step 1e-5 per coordinate. When max_coords > 0 and the
// input is larger, a seeded random subset of coordinates is probed.
GradCheckReport gradcheck(const ScalarFn& f, std::vector<double> x,
                          std::span<const double> analytic, double tol,
                          double step = 1e-5, int max_coords = -1, uint64_t seed = 1);

}  // namespace sddkit::nn
