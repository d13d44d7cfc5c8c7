#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>

#include "setdist/core.hpp"

namespace setdist::testutil {

struct FdReport {
  std::size_t checked = 0;
  std::size_t failures = 0;
  double worst_rel = 0.0;
};

// Central finite differences on randomly sampled parameter coordinates
// against a precomputed analytic gradient. Coordinates whose derivative
// magnitude falls below min_deriv are skipped.
inline FdReport fd_check(std::span<double> params,
                         std::span<const double> analytic,
                         const std::function<double()>& loss, SeededRng& rng,
                         std::size_t n_coords, double step = 1e-5,
                         double rel_tol = 1e-4, double min_deriv = 1e-8) {
  FdReport rep;
  for (std::size_t t = 0; t < n_coords; ++t) {
    const std::size_t k = rng.below(params.size());
    const double saved = params[k];
    params[k] = saved + step;
    const double up = loss();
    params[k] = saved - step;
    const double down = loss();
    params[k] = saved;
    const double fd = (up - down) / (2.0 * step);
    const double g = analytic[k];
    const double mag = std::max(std::abs(fd), std::abs(g));
    if (mag < min_deriv) continue;
    const double rel = std::abs(fd - g) / mag;
    rep.checked += 1;
    rep.worst_rel = std::max(rep.worst_rel, rel);
    if (rel > rel_tol) rep.failures += 1;
  }
  return rep;
}

}  // namespace setdist::testutil
