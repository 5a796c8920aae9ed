// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "defcure/dataset.hpp"
#include "defcure/numeric.hpp"

namespace defcure {

/// Product-limit estimate at each distinct event time, with Greenwood
/// standard errors and log-transformed 95% bounds clipped to [0, 1].
struct KmCurve {
  std::vector<double> time;
  std::vector<std::size_t> at_risk;
  std::vector<std::size_t> events;
  std::vector<double> survival;
  std::vector<double> std_err;
  std::vector<double> lower;
  std::vector<double> upper;

  /// Right-continuous step function; 1 before the first event time.
  double operator()(double t) const {
    const auto it = std::upper_bound(time.begin(), time.end(), t);
    return it == time.begin() ? 1.0 : survival[static_cast<std::size_t>(it - time.begin()) - 1];
  }
};

inline KmCurve kaplan_meier(std::span<const double> time, std::span<const int> event) {
  if (time.empty()) throw ValidationError("Kaplan-Meier needs at least one subject");
  if (time.size() != event.size()) throw ValidationError("time and event vectors differ in length");
  std::vector<std::size_t> order(time.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return time[a] < time[b]; });

  KmCurve km;
  std::size_t at_risk = time.size();
  double s = 1.0, greenwood = 0.0;
  for (std::size_t k = 0; k < order.size();) {
    const double t = time[order[k]];
    std::size_t d = 0, leaving = 0;
    for (; k < order.size() && time[order[k]] == t; ++k, ++leaving) d += event[order[k]] == 1 ? 1 : 0;
    if (d > 0) {
      const auto n = static_cast<double>(at_risk);
      const auto dd = static_cast<double>(d);
      s *= 1.0 - dd / n;
      greenwood = d < at_risk ? greenwood + dd / (n * (n - dd)) : kInf;
      const double half = 1.96 * std::sqrt(greenwood);
      km.time.push_back(t);
      km.at_risk.push_back(at_risk);
      km.events.push_back(d);
      km.survival.push_back(s);
      km.std_err.push_back(s > 0.0 ? s * std::sqrt(greenwood) : 0.0);
      km.lower.push_back(s > 0.0 ? std::clamp(s * std::exp(-half), 0.0, 1.0) : 0.0);
      km.upper.push_back(s > 0.0 ? std::clamp(s * std::exp(half), 0.0, 1.0) : 0.0);
    }
    at_risk -= leaving;
  }
  return km;
}

inline KmCurve kaplan_meier(const SurvivalDataset& data) { return kaplan_meier(data.times(), data.events()); }

}  // namespace defcure
