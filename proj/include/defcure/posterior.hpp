// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "defcure/numeric.hpp"

namespace defcure {

/// One retained sampler iteration.
struct DrawRecord {
  std::vector<double> unconstrained;
  std::vector<double> constrained;
  double log_density = 0.0;
  bool divergent = false;
  int tree_depth = 0;
  int n_leapfrog = 0;
  double energy = 0.0;
  double accept_stat = 0.0;
};

struct ChainResult {
  std::vector<DrawRecord> draws;
  double step_size = 0.0;
  std::vector<double> inv_metric;  // adapted diagonal (marginal variance estimates)
  std::size_t warmup_divergences = 0;
  double warmup_accept_stat = 0.0;  // mean over the final half of warm-up
};

inline double sample_mean(std::span<const double> x) {
  return x.empty() ? 0.0 : std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

inline double sample_variance(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  const double m = sample_mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return ss / static_cast<double>(x.size() - 1);
}

/// Linear-interpolation quantile (Hyndman-Fan type 7).
inline double quantile(std::vector<double> x, double prob) {
  if (x.empty()) throw ValidationError("quantile of an empty sample");
  std::sort(x.begin(), x.end());
  const double h = (static_cast<double>(x.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, x.size() - 1);
  return x[lo] + (h - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

namespace detail {
inline std::vector<double> autocovariance(std::span<const double> x) {
  const std::size_t n = x.size();
  const double m = sample_mean(x);
  std::vector<double> acov(n, 0.0);
  for (std::size_t lag = 0; lag < n; ++lag) {
    double s = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) s += (x[i] - m) * (x[i + lag] - m);
    acov[lag] = s / static_cast<double>(n);
  }
  return acov;
}
}  // namespace detail

/// Multi-chain effective sample size with Geyer's initial monotone sequence
/// estimator. Chains must have equal length.
inline double effective_sample_size(const std::vector<std::vector<double>>& chains) {
  const std::size_t m = chains.size();
  if (m == 0) return 0.0;
  const std::size_t n = chains[0].size();
  if (n < 6) return static_cast<double>(m * n);

  std::vector<std::vector<double>> acov(m);
  std::vector<double> chain_mean(m), chain_var(m);
  for (std::size_t c = 0; c < m; ++c) {
    acov[c] = detail::autocovariance(chains[c]);
    chain_mean[c] = sample_mean(chains[c]);
    chain_var[c] = acov[c][0] * static_cast<double>(n) / static_cast<double>(n - 1);
  }
  const double mean_var = sample_mean(chain_var);
  if (!(mean_var > 0.0)) return static_cast<double>(m * n);
  double var_plus = mean_var * static_cast<double>(n - 1) / static_cast<double>(n);
  if (m > 1) var_plus += sample_variance(chain_mean);

  const auto rho_at = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t c = 0; c < m; ++c) s += acov[c][lag];
    return 1.0 - (mean_var - s / static_cast<double>(m)) / var_plus;
  };

  std::vector<double> rho(n, 0.0);
  rho[0] = 1.0;
  double rho_even = 1.0;
  double rho_odd = rho_at(1);
  rho[1] = rho_odd;
  std::size_t t = 1;
  while (t < n - 5 && rho_even + rho_odd > 0.0) {
    rho_even = rho_at(t + 1);
    rho_odd = rho_at(t + 2);
    if (rho_even + rho_odd >= 0.0) {
      rho[t + 1] = rho_even;
      rho[t + 2] = rho_odd;
    }
    t += 2;
  }
  const std::size_t max_t = t;
  if (rho_even > 0.0 && max_t + 1 < n) rho[max_t + 1] = rho_even;

  for (t = 1; t + 2 <= max_t; t += 2) {
    if (rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t]) {
      rho[t + 1] = (rho[t - 1] + rho[t]) / 2.0;
      rho[t + 2] = rho[t + 1];
    }
  }
  const double total = static_cast<double>(m * n);
  double tau = -1.0;
  for (std::size_t k = 0; k <= max_t && k < n; ++k) tau += 2.0 * rho[k];
  if (max_t + 1 < n) tau += rho[max_t + 1];
  tau = std::max(tau, 1.0 / std::log10(total));
  return total / tau;
}

/// Potential scale reduction computed on chains split in half.
inline double split_rhat(const std::vector<std::vector<double>>& chains) {
  std::vector<std::vector<double>> halves;
  for (const auto& c : chains) {
    const std::size_t half = c.size() / 2;
    if (half < 2) continue;
    halves.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(half));
    halves.emplace_back(c.end() - static_cast<std::ptrdiff_t>(half), c.end());
  }
  if (halves.size() < 2) return kInf;
  const double n = static_cast<double>(halves[0].size());
  std::vector<double> means, vars;
  for (const auto& h : halves) {
    means.push_back(sample_mean(h));
    vars.push_back(sample_variance(h));
  }
  const double w = sample_mean(vars);
  const double b = n * sample_variance(means);
  if (!(w > 0.0)) return 1.0;
  const double var_plus = (n - 1.0) / n * w + b / n;
  return std::sqrt(var_plus / w);
}

/// Retained draws of every chain plus summary accessors.
class PosteriorDraws {
 public:
  PosteriorDraws() = default;
  PosteriorDraws(std::vector<std::string> names, std::vector<ChainResult> chains)
      : names_(std::move(names)), chains_(std::move(chains)) {}

  const std::vector<std::string>& parameter_names() const { return names_; }
  std::size_t dimension() const { return names_.size(); }
  std::size_t chains() const { return chains_.size(); }
  const ChainResult& chain(std::size_t c) const { return chains_.at(c); }
  std::size_t draws_per_chain() const { return chains_.empty() ? 0 : chains_[0].draws.size(); }
  std::size_t total_draws() const { return chains() * draws_per_chain(); }

  /// Constrained draws of parameter `j`, one vector per chain.
  std::vector<std::vector<double>> chain_values(std::size_t j) const {
    std::vector<std::vector<double>> out;
    for (const auto& c : chains_) {
      std::vector<double> v;
      v.reserve(c.draws.size());
      for (const auto& d : c.draws) v.push_back(d.constrained.at(j));
      out.push_back(std::move(v));
    }
    return out;
  }

  std::vector<double> values(std::size_t j) const {
    std::vector<double> all;
    for (auto& v : chain_values(j)) all.insert(all.end(), v.begin(), v.end());
    return all;
  }

  /// All constrained draws in chain-major order.
  std::vector<std::vector<double>> constrained_draws() const {
    std::vector<std::vector<double>> out;
    out.reserve(total_draws());
    for (const auto& c : chains_)
      for (const auto& d : c.draws) out.push_back(d.constrained);
    return out;
  }

  std::vector<double> constrained_mean() const {
    std::vector<double> m(dimension(), 0.0);
    for (std::size_t j = 0; j < dimension(); ++j) m[j] = mean(j);
    return m;
  }

  double mean(std::size_t j) const { return sample_mean(values(j)); }
  double sd(std::size_t j) const { return std::sqrt(sample_variance(values(j))); }
  double quantile(std::size_t j, double prob) const { return defcure::quantile(values(j), prob); }
  double ess(std::size_t j) const { return effective_sample_size(chain_values(j)); }
  double rhat(std::size_t j) const { return split_rhat(chain_values(j)); }
  double mcse(std::size_t j) const { return sd(j) / std::sqrt(ess(j)); }

  std::size_t divergences() const {
    std::size_t n = 0;
    for (const auto& c : chains_)
      for (const auto& d : c.draws) n += d.divergent ? 1 : 0;
    return n;
  }

  double mean_accept_stat() const {
    double s = 0.0;
    for (const auto& c : chains_)
      for (const auto& d : c.draws) s += d.accept_stat;
    return total_draws() ? s / static_cast<double>(total_draws()) : 0.0;
  }

 private:
  std::vector<std::string> names_;
  std::vector<ChainResult> chains_;
};

/// Posterior mean, sd, equal-tailed 95% interval, and chain diagnostics for
/// one parameter.
struct ParameterSummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double ess = 0.0;
  double rhat = 0.0;
};

/// Rows follow the draws' parameter order. ESS and R-hat are skipped (left
/// at 0) when `chain_diagnostics` is false.
inline std::vector<ParameterSummary> summarize(const PosteriorDraws& draws, bool chain_diagnostics = true) {
  std::vector<ParameterSummary> rows;
  for (std::size_t j = 0; j < draws.dimension(); ++j) {
    const auto v = draws.values(j);
    ParameterSummary s;
    s.name = draws.parameter_names()[j];
    s.mean = sample_mean(v);
    s.sd = std::sqrt(sample_variance(v));
    s.ci_low = quantile(v, 0.025);
    s.ci_high = quantile(v, 0.975);
    if (chain_diagnostics) {
      s.ess = draws.ess(j);
      s.rhat = draws.rhat(j);
    }
    rows.push_back(std::move(s));
  }
  return rows;
}

}  // namespace defcure
