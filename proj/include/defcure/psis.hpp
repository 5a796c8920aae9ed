// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

// Pareto-smoothed importance sampling for leave-one-out cross-validation.
//
// For observation i the raw log importance ratios are -log p(y_i | theta_s).
// The M = ceil(0.2 S) largest ratios are replaced by expected order
// statistics of a generalized Pareto distribution fitted to their
// exceedances over the largest remaining ratio, then every weight is capped at
// S^{3/4} times the mean smoothed weight. The fitted shape k-hat grades how
// trustworthy the estimate is.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "defcure/numeric.hpp"

namespace defcure {

/// Log-likelihood matrix L[s][i] over S draws and n observations, row-major.
struct PointwiseLogLik {
  std::size_t draws = 0;
  std::size_t observations = 0;
  std::vector<double> values;

  PointwiseLogLik() = default;
  PointwiseLogLik(std::size_t s, std::size_t n) : draws(s), observations(n), values(s * n, 0.0) {}

  double& at(std::size_t s, std::size_t i) { return values[s * observations + i]; }
  double at(std::size_t s, std::size_t i) const { return values[s * observations + i]; }

  std::vector<double> column(std::size_t i) const {
    std::vector<double> c(draws);
    for (std::size_t s = 0; s < draws; ++s) c[s] = at(s, i);
    return c;
  }
};

struct GpdFit {
  double k = std::numeric_limits<double>::quiet_NaN();      // shape
  double sigma = std::numeric_limits<double>::quiet_NaN();  // scale
  bool degenerate = false;
};

/// Quantile of the generalized Pareto distribution with location 0.
inline double gpd_quantile(double prob, double k, double sigma) {
  if (k == 0.0) return -sigma * std::log1p(-prob);
  return sigma * std::expm1(-k * std::log1p(-prob)) / k;
}

/// Empirical-Bayes estimate of the GPD shape and scale from exceedances over
/// a threshold: the posterior mean of the profile parameter b is computed by
/// quadrature on a grid of m = 30 + floor(sqrt(M)) points, then k-hat is
/// shrunk toward 0.5 as (M k + 5) / (M + 10).
inline GpdFit fit_gpd_tail(std::span<const double> exceedances) {
  std::vector<double> x(exceedances.begin(), exceedances.end());
  const std::size_t n = x.size();
  if (n < 5) throw DomainError("GPD tail fit needs at least 5 exceedances");
  std::sort(x.begin(), x.end());
  GpdFit fit;
  if (!(x.back() > x.front())) {
    fit.degenerate = true;
    return fit;
  }

  const double dn = static_cast<double>(n);
  const std::size_t m = 30 + static_cast<std::size_t>(std::sqrt(dn));
  double x_quarter = x[static_cast<std::size_t>(dn / 4.0 + 0.5) - 1];
  if (!(x_quarter > 0.0)) x_quarter = *std::upper_bound(x.begin(), x.end(), 0.0);
  constexpr double kPrior = 3.0;

  std::vector<double> b(m), log_lik(m);
  for (std::size_t j = 0; j < m; ++j) {
    b[j] = 1.0 / x.back() + (1.0 - std::sqrt(static_cast<double>(m) / (static_cast<double>(j + 1) - 0.5))) /
                                (kPrior * x_quarter);
    double k = 0.0;
    for (double v : x) k += std::log1p(-b[j] * v);
    k /= dn;
    log_lik[j] = dn * (std::log(-b[j] / k) - k - 1.0);
  }

  std::vector<double> w(m);
  for (std::size_t j = 0; j < m; ++j) {
    double denom = 0.0;
    for (std::size_t l = 0; l < m; ++l) denom += std::exp(log_lik[l] - log_lik[j]);
    w[j] = 1.0 / denom;
  }
  double w_sum = 0.0, b_post = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    if (!(w[j] >= 10.0 * std::numeric_limits<double>::epsilon())) continue;
    w_sum += w[j];
    b_post += w[j] * b[j];
  }
  b_post /= w_sum;

  double k = 0.0;
  for (double v : x) k += std::log1p(-b_post * v);
  k /= dn;
  fit.sigma = -k / b_post;
  fit.k = (dn * k + 10.0 * 0.5) / (dn + 10.0);
  return fit;
}

enum class ParetoTier { ok, fair, bad, very_bad, not_applicable };

inline ParetoTier pareto_tier(double k_hat) {
  if (std::isnan(k_hat)) return ParetoTier::not_applicable;
  if (k_hat < 0.5) return ParetoTier::ok;
  if (k_hat < 0.7) return ParetoTier::fair;
  if (k_hat < 1.0) return ParetoTier::bad;
  return ParetoTier::very_bad;
}

inline std::string to_string(ParetoTier t) {
  switch (t) {
    case ParetoTier::ok: return "ok";
    case ParetoTier::fair: return "fair";
    case ParetoTier::bad: return "bad";
    case ParetoTier::very_bad: return "very bad";
    case ParetoTier::not_applicable: return "n/a";
  }
  return "?";
}

struct PsisSmoothed {
  std::vector<double> log_weights;  // unnormalized, shifted so the largest raw ratio is 0
  double k_hat = std::numeric_limits<double>::quiet_NaN();
  double log_cap = std::numeric_limits<double>::quiet_NaN();
  bool degenerate = false;
};

/// Number of tail draws used for the GPD fit.
inline std::size_t psis_tail_size(std::size_t draws) {
  return static_cast<std::size_t>(std::ceil(0.2 * static_cast<double>(draws)));
}

/// Smooths and truncates one observation's log importance ratios. The tail is
/// exactly the M largest ratios (ties broken by draw index); the threshold is
/// the largest ratio outside it. A tail with no spread is passed through
/// untouched and flagged degenerate.
inline PsisSmoothed psis_smooth(std::span<const double> log_ratios) {
  const std::size_t s = log_ratios.size();
  if (s < 25) throw DomainError("PSIS needs at least 25 draws");
  const std::size_t m = psis_tail_size(s);

  PsisSmoothed out;
  const double max_ratio = *std::max_element(log_ratios.begin(), log_ratios.end());
  out.log_weights.resize(s);
  for (std::size_t j = 0; j < s; ++j) out.log_weights[j] = log_ratios[j] - max_ratio;
  auto& lw = out.log_weights;

  std::vector<std::size_t> order(s);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return lw[a] < lw[b]; });
  const double log_threshold = lw[order[s - m - 1]];
  const double threshold = std::exp(log_threshold);

  std::vector<double> exceedances(m);
  for (std::size_t z = 0; z < m; ++z) exceedances[z] = std::exp(lw[order[s - m + z]]) - threshold;
  const GpdFit fit = fit_gpd_tail(exceedances);
  if (fit.degenerate) {
    out.degenerate = true;
    return out;
  }
  out.k_hat = fit.k;

  for (std::size_t z = 0; z < m; ++z) {
    const double prob = (static_cast<double>(z) + 0.5) / static_cast<double>(m);
    const double q = gpd_quantile(prob, fit.k, fit.sigma);
    lw[order[s - m + z]] = q > 0.0 ? log_sum_exp(log_threshold, std::log(q)) : log_threshold;
  }

  out.log_cap = 0.75 * std::log(static_cast<double>(s)) + log_sum_exp(lw) - std::log(static_cast<double>(s));
  for (double& v : lw) v = std::min(v, out.log_cap);
  return out;
}

struct PsisResult {
  std::vector<double> elpd_i;
  std::vector<double> k_hat;
  std::vector<ParetoTier> tier;
  double elpd = 0.0;

  double looic() const { return -2.0 * elpd; }

  std::size_t count(ParetoTier t) const {
    return static_cast<std::size_t>(std::count(tier.begin(), tier.end(), t));
  }
};

/// elpd_i = log(sum_s w_s p(y_i|theta_s) / sum_s w_s) with smoothed weights.
inline PsisResult psis_loo(const PointwiseLogLik& L) {
  PsisResult r;
  for (std::size_t i = 0; i < L.observations; ++i) {
    const std::vector<double> ll = L.column(i);
    std::vector<double> ratios(ll.size());
    for (std::size_t s = 0; s < ll.size(); ++s) ratios[s] = -ll[s];
    const PsisSmoothed sm = psis_smooth(ratios);
    std::vector<double> num(ll.size());
    for (std::size_t s = 0; s < ll.size(); ++s) num[s] = sm.log_weights[s] + ll[s];
    const double e = log_sum_exp(num) - log_sum_exp(sm.log_weights);
    r.elpd_i.push_back(e);
    r.k_hat.push_back(sm.k_hat);
    r.tier.push_back(pareto_tier(sm.k_hat));
    r.elpd += e;
  }
  return r;
}

}  // namespace defcure
