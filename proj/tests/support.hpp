// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "defcure/dataset.hpp"
#include "defcure/rng.hpp"
#include "defcure/simulator.hpp"

namespace defcure::testing {

/// Integral of `f` over (0, inf), split at `knot` so endpoint singularities at
/// zero and slow tails are each handled by a suitable rule.
inline double integrate_half_line(const std::function<double(double)>& f, double knot) {
  boost::math::quadrature::tanh_sinh<double> head;
  boost::math::quadrature::exp_sinh<double> tail;
  return head.integrate(f, 0.0, knot) + tail.integrate(f, knot, std::numeric_limits<double>::infinity());
}

/// Central differences with h = 1e-5 (1 + |u_j|).
inline std::vector<double> finite_difference(const std::function<double(std::span<const double>)>& f,
                                             std::vector<double> u) {
  std::vector<double> g(u.size());
  for (std::size_t j = 0; j < u.size(); ++j) {
    const double h = 1e-5 * (1.0 + std::abs(u[j]));
    const double keep = u[j];
    u[j] = keep + h;
    const double up = f(u);
    u[j] = keep - h;
    const double down = f(u);
    u[j] = keep;
    g[j] = (up - down) / (2.0 * h);
  }
  return g;
}

/// Largest componentwise |a - b| / max(|b|, 1).
inline double max_relative_error(std::span<const double> a, std::span<const double> b) {
  double worst = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j)
    worst = std::max(worst, std::abs(a[j] - b[j]) / std::max(std::abs(b[j]), 1.0));
  return worst;
}

/// Random truth near the reference design, for property checks.
inline TrueModel random_truth(Rng& rng) {
  TrueModel t;
  t.beta = {rng.uniform(-2.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
  t.alpha = -rng.uniform(0.3, 3.0);
  t.psi = rng.uniform(0.4, 3.0);
  return t;
}

}  // namespace defcure::testing
