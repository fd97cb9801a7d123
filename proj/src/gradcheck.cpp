#include "sddkit/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sddkit/common.hpp"
#include "sddkit/rng.hpp"

namespace sddkit::nn {

GradCheckReport gradcheck(const ScalarFn& f, std::vector<double> x,
                          std::span<const double> analytic, double tol, double step,
                          int max_coords, uint64_t seed) {
  require(x.size() == analytic.size(), "gradcheck: gradient size ", analytic.size(),
          " differs from input size ", x.size());
  GradCheckReport rep;
  rep.tol = tol;

  std::vector<size_t> coords(x.size());
  std::iota(coords.begin(), coords.end(), 0);
  if (max_coords > 0 && coords.size() > static_cast<size_t>(max_coords)) {
    Rng rng(seed);
    for (size_t i = coords.size(); i > 1; --i)
      std::swap(coords[i - 1], coords[static_cast<size_t>(rng.uniform_int(static_cast<int>(i)))]);
    coords.resize(static_cast<size_t>(max_coords));
  }

  for (size_t i : coords) {
    const double keep = x[i];
    x[i] = keep + step;
    const double fp = f(x);
    x[i] = keep - step;
    const double fm = f(x);
    x[i] = keep;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      rep.finite = false;
      rep.pass = false;
      return rep;
    }
    const double numeric = (fp - fm) / (2.0 * step);
    const double a = analytic[i];
    const double rel = std::abs(a - numeric) /
                       std::max({1.0, std::abs(a), std::abs(numeric)});
    if (rel > rep.max_rel_err) {
      rep.max_rel_err = rel;
      rep.worst_coord = i;
    }
    ++rep.coords_checked;
  }
  rep.pass = rep.finite && rep.max_rel_err <= tol;
  return rep;
}

}  // namespace sddkit::nn
