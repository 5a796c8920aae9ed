// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "defcure/model.hpp"
#include "defcure/numeric.hpp"
#include "defcure/posterior.hpp"
#include "defcure/psis.hpp"

namespace defcure {

struct ResidualSet {
  std::vector<double> martingale;
  std::vector<double> deviance;
};

/// r_M = delta + log S(t) at the given constrained parameters.
inline std::vector<double> martingale_residuals(const CureModel& model, std::span<const double> theta) {
  const auto& data = model.data();
  std::vector<double> r(data.size());
  for (std::size_t i = 0; i < data.size(); ++i)
    r[i] = static_cast<double>(data.event(i)) + model.observation_log_survival(theta, i);
  return r;
}

/// Martingale residuals averaged over posterior draws instead of evaluated at
/// the posterior mean.
inline std::vector<double> martingale_residuals(const CureModel& model, const PosteriorDraws& draws) {
  const auto& data = model.data();
  std::vector<double> r(data.size(), 0.0);
  const auto thetas = draws.constrained_draws();
  for (const auto& theta : thetas)
    for (std::size_t i = 0; i < data.size(); ++i) r[i] += model.observation_log_survival(theta, i);
  for (std::size_t i = 0; i < data.size(); ++i)
    r[i] = static_cast<double>(data.event(i)) + r[i] / static_cast<double>(thetas.size());
  return r;
}

inline double deviance_residual(double r_m, int event) {
  if (r_m > 1.0) throw DomainError("martingale residual exceeds 1");
  const double d = static_cast<double>(event);
  double arg = -2.0 * (r_m + (event ? d * std::log(d - r_m) : 0.0));
  if (arg < 0.0) {
    if (arg < -1e-12) throw DomainError("negative deviance residual argument " + std::to_string(arg));
    arg = 0.0;
  }
  if (r_m == 0.0) return 0.0;
  return std::copysign(std::sqrt(arg), r_m);
}

inline std::vector<double> deviance_residuals(std::span<const double> r_m, std::span<const int> events) {
  if (r_m.size() != events.size()) throw ValidationError("residual and event vectors differ in length");
  std::vector<double> r(r_m.size());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = deviance_residual(r_m[i], events[i]);
  return r;
}

inline ResidualSet residuals(const CureModel& model, std::span<const double> theta) {
  ResidualSet set;
  set.martingale = martingale_residuals(model, theta);
  set.deviance = deviance_residuals(set.martingale, model.data().events());
  return set;
}

/// L[s][i] for constrained draws `thetas`.
inline PointwiseLogLik pointwise_loglik(const CureModel& model, const std::vector<std::vector<double>>& thetas) {
  const std::size_t n = model.data().size();
  PointwiseLogLik L(thetas.size(), n);
  for (std::size_t s = 0; s < thetas.size(); ++s)
    for (std::size_t i = 0; i < n; ++i) {
      const double v = model.observation_log_lik(thetas[s], i);
      if (!std::isfinite(v))
        throw DomainError("non-finite log-likelihood at draw " + std::to_string(s + 1) + ", observation " +
                          std::to_string(i + 1));
      L.at(s, i) = v;
    }
  return L;
}

inline PointwiseLogLik pointwise_loglik(const CureModel& model, const PosteriorDraws& draws) {
  return pointwise_loglik(model, draws.constrained_draws());
}

struct CpoResult {
  std::vector<double> log_cpo;
  std::vector<double> cpo;
};

/// Posterior harmonic mean of p(y_i | theta_s), on the log scale:
/// log CPO_i = log S + l_min - log sum_s exp(l_min - l_s).
inline CpoResult cpo(const PointwiseLogLik& L) {
  if (L.draws < 2) throw ValidationError("CPO needs at least two draws");
  CpoResult r;
  const double log_s = std::log(static_cast<double>(L.draws));
  for (std::size_t i = 0; i < L.observations; ++i) {
    double l_min = kInf;
    for (std::size_t s = 0; s < L.draws; ++s) l_min = std::min(l_min, L.at(s, i));
    double acc = 0.0;
    for (std::size_t s = 0; s < L.draws; ++s) acc += std::exp(l_min - L.at(s, i));
    const double v = log_s + l_min - std::log(acc);
    r.log_cpo.push_back(v);
    r.cpo.push_back(std::exp(v));
  }
  return r;
}

inline double lpml(std::span<const double> log_cpo) {
  double s = 0.0;
  for (double v : log_cpo) s += v;
  return s;
}

struct DicResult {
  double mean_deviance = 0.0;      // D-bar
  double deviance_at_mean = 0.0;   // D(theta-bar)
  double p_d = 0.0;
  double dic_half = 0.0;           // D-bar + p_D / 2
  double dic_standard = 0.0;       // D-bar + p_D
};

inline DicResult dic_from_deviances(std::span<const double> deviances, double deviance_at_mean) {
  if (deviances.size() < 2) throw ValidationError("DIC needs at least two draws");
  DicResult r;
  r.mean_deviance = sample_mean(deviances);
  r.deviance_at_mean = deviance_at_mean;
  r.p_d = r.mean_deviance - deviance_at_mean;
  r.dic_half = r.mean_deviance + 0.5 * r.p_d;
  r.dic_standard = r.mean_deviance + r.p_d;
  return r;
}

/// DIC over constrained draws; theta-bar is the mean of the constrained draws.
inline DicResult dic(const CureModel& model, const std::vector<std::vector<double>>& thetas) {
  const PointwiseLogLik L = pointwise_loglik(model, thetas);
  std::vector<double> dev(L.draws, 0.0);
  for (std::size_t s = 0; s < L.draws; ++s)
    for (std::size_t i = 0; i < L.observations; ++i) dev[s] -= 2.0 * L.at(s, i);

  std::vector<double> theta_bar(model.dimension(), 0.0);
  for (const auto& th : thetas)
    for (std::size_t j = 0; j < theta_bar.size(); ++j) theta_bar[j] += th[j];
  for (double& v : theta_bar) v /= static_cast<double>(thetas.size());
  double d_bar = 0.0;
  for (std::size_t i = 0; i < model.data().size(); ++i) d_bar -= 2.0 * model.observation_log_lik(theta_bar, i);
  return dic_from_deviances(dev, d_bar);
}

inline DicResult dic(const CureModel& model, const PosteriorDraws& draws) {
  return dic(model, draws.constrained_draws());
}

/// Everything `diagnose` and `compare` report for one fitted model.
struct DiagnosticsReport {
  ResidualSet residuals;
  CpoResult cpo;
  double lpml = 0.0;
  DicResult dic;
  PsisResult loo;
};

enum class ResidualMode { plug_in, averaged };

inline DiagnosticsReport diagnose(const CureModel& model, const PosteriorDraws& draws,
                                  ResidualMode mode = ResidualMode::plug_in) {
  DiagnosticsReport r;
  const auto thetas = draws.constrained_draws();
  r.residuals.martingale = mode == ResidualMode::plug_in ? martingale_residuals(model, draws.constrained_mean())
                                                         : martingale_residuals(model, draws);
  r.residuals.deviance = deviance_residuals(r.residuals.martingale, model.data().events());
  const PointwiseLogLik L = pointwise_loglik(model, thetas);
  r.cpo = cpo(L);
  r.lpml = lpml(r.cpo.log_cpo);
  r.dic = dic(model, thetas);
  r.loo = psis_loo(L);
  return r;
}

}  // namespace defcure
