// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

// Bayesian regression on the cure probability of the cure-parametrized DGGD.
//
// The cure probability of subject i is p_i = logistic(x_i' beta). The sampler
// works on the unconstrained vector (beta, a, s) with alpha = -exp(a) and
// psi = exp(s); the log-Jacobian of that map is a + s.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "defcure/dataset.hpp"
#include "defcure/distributions.hpp"
#include "defcure/numeric.hpp"

namespace defcure {

/// Linear predictors beyond this magnitude are clamped so log(p) and log(1-p)
/// stay finite.
inline constexpr double kLinkClamp = 35.0;

struct ParamVector {
  std::vector<double> beta;
  double alpha = -1.0;
  double psi = 1.0;
};

struct UnconstrainedParams {
  std::vector<double> beta;
  double a = 0.0;  // log(-alpha)
  double s = 0.0;  // log(psi)
};

/// Normal priors on beta_k and alpha, Gamma(shape, rate) on psi. The Weibull
/// mixture baseline reuses the beta priors and adds Gamma priors on its shape
/// and rate. A single beta mean/sd entry is broadcast to every coefficient.
struct PriorSpec {
  std::vector<double> beta_means{0.0};
  std::vector<double> beta_sds{10.0};
  double alpha_mean = 0.0;
  double alpha_sd = 10.0;
  double psi_shape = 0.01;
  double psi_rate = 0.01;
  double lambda_shape = 0.01;
  double lambda_rate = 0.01;
  double gamma_shape = 0.01;
  double gamma_rate = 0.01;

  double beta_mean(std::size_t k) const { return beta_means.size() == 1 ? beta_means[0] : beta_means.at(k); }
  double beta_sd(std::size_t k) const { return beta_sds.size() == 1 ? beta_sds[0] : beta_sds.at(k); }

  void validate(std::size_t width) const {
    const auto sized = [&](const std::vector<double>& v) { return v.size() == 1 || v.size() == width; };
    if (!sized(beta_means) || !sized(beta_sds))
      throw ValidationError("beta prior lists must have one entry or one per coefficient");
    for (double sd : beta_sds)
      if (!(sd > 0.0)) throw ValidationError("beta prior sds must be positive");
    for (double v : {alpha_sd, psi_shape, psi_rate, lambda_shape, lambda_rate, gamma_shape, gamma_rate})
      if (!(v > 0.0) || !std::isfinite(v))
        throw ValidationError("prior scales, shapes and rates must be positive");
  }
};

inline UnconstrainedParams to_unconstrained(const ParamVector& theta) {
  if (!(theta.alpha < 0.0)) throw DomainError("alpha must be negative");
  require_positive(theta.psi, "psi");
  return {theta.beta, std::log(-theta.alpha), std::log(theta.psi)};
}

inline ParamVector to_constrained(const UnconstrainedParams& u) {
  return {u.beta, -std::exp(u.a), std::exp(u.s)};
}

inline double linear_predictor(std::span<const double> beta, std::span<const double> x) {
  if (beta.size() != x.size()) throw ValidationError("coefficient and covariate lengths differ");
  double eta = 0.0;
  for (std::size_t k = 0; k < beta.size(); ++k) eta += beta[k] * x[k];
  return eta;
}

inline double cure_probability(std::span<const double> beta, std::span<const double> x) {
  return logistic(std::clamp(linear_predictor(beta, x), -kLinkClamp, kLinkClamp));
}

/// One observation's log-likelihood contribution and its partial derivatives
/// with respect to the linear predictor, alpha and psi.
struct TermGradient {
  double value = 0.0;
  double d_eta = 0.0;
  double d_alpha = 0.0;
  double d_psi = 0.0;
};

/// log f(t) when `event`, else log S(t), of the cure-parametrized DGGD with
/// p = logistic(eta). Accepts t = 0 for censored observations.
inline TermGradient dggd_cure_term(double t, bool event, double eta, double alpha, double psi) {
  TermGradient g;
  const bool saturated = std::abs(eta) > kLinkClamp;
  eta = std::clamp(eta, -kLinkClamp, kLinkClamp);
  const double p = logistic(eta);
  const double log_q = -softplus(eta);  // log(1 - p)
  const double x = log_q / psi;         // log((1 - p)^{1/psi})
  const double r = std::exp(x);
  const double c = -std::expm1(x);  // baseline cure fraction e^{mu/alpha}
  const double log_c = log1m_exp(x);
  const double e = std::expm1(alpha * t);
  const double hazard = log_c * e;  // (mu/alpha)(e^{alpha t} - 1)
  const double dlogc_dx = -r / c;
  const double dhazard_dalpha = log_c * t * (e + 1.0);

  double d_x = 0.0;
  if (event) {
    // log mu = log(-alpha) + log(-log c); for x << 0, -log c ~ e^x.
    const double log_neg_logc = x < -40.0 ? x : std::log(-log_c);
    const double dlog_neg_logc_dx = x < -40.0 ? 1.0 : dlogc_dx / log_c;
    const bool power = psi != 1.0;
    const double log_f0 = power ? log1m_exp(-hazard) : 0.0;
    const double dval_dhazard = -1.0 + (power ? (psi - 1.0) / std::expm1(hazard) : 0.0);
    g.value = std::log(psi) + std::log(-alpha) + log_neg_logc + alpha * t - hazard +
              (power ? (psi - 1.0) * log_f0 : 0.0);
    d_x = dlog_neg_logc_dx + dval_dhazard * e * dlogc_dx;
    g.d_alpha = 1.0 / alpha + t + dval_dhazard * dhazard_dalpha;
    g.d_psi = 1.0 / psi + (power ? log_f0 : log1m_exp(-hazard));
  } else {
    if (!(hazard > 0.0)) return g;
    const double log_f0 = log1m_exp(-hazard);
    const double log_g = psi * log_f0;  // log F(t) of the power family
    g.value = log1m_exp(log_g);
    const double dval_dlog_g = -1.0 / std::expm1(-log_g);
    const double dval_dhazard = dval_dlog_g * psi / std::expm1(hazard);
    d_x = dval_dhazard * e * dlogc_dx;
    g.d_alpha = dval_dhazard * dhazard_dalpha;
    g.d_psi = dval_dlog_g * log_f0;
  }
  g.d_eta = saturated ? 0.0 : d_x * (-p / psi);
  g.d_psi += d_x * (-x / psi);
  return g;
}

inline double observation_log_likelihood(const ParamVector& theta, double t, bool event,
                                         std::span<const double> x) {
  return dggd_cure_term(t, event, linear_predictor(theta.beta, x), theta.alpha, theta.psi).value;
}

/// Right-censored log-likelihood: sum of log f over events and log S over
/// censored subjects.
inline double log_likelihood(const ParamVector& theta, const SurvivalDataset& data) {
  if (!(theta.alpha < 0.0)) throw DomainError("alpha must be negative");
  require_positive(theta.psi, "psi");
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i)
    total += observation_log_likelihood(theta, data.time(i), data.event(i) == 1, data.row(i));
  return total;
}

/// Normal(beta_k), Normal(alpha) and Gamma(psi) log densities. With
/// `psi_free == false` the psi term is left out (Gompertz family).
inline double log_prior(const ParamVector& theta, const PriorSpec& priors, bool psi_free = true) {
  priors.validate(theta.beta.size());
  double lp = 0.0;
  for (std::size_t k = 0; k < theta.beta.size(); ++k)
    lp += normal_lpdf(theta.beta[k], priors.beta_mean(k), priors.beta_sd(k));
  lp += normal_lpdf(theta.alpha, priors.alpha_mean, priors.alpha_sd);
  if (psi_free) lp += gamma_lpdf(theta.psi, priors.psi_shape, priors.psi_rate);
  return lp;
}

namespace detail {

// Log-posterior on the unconstrained layout [beta..., a, (s)]. Writes the
// gradient into `grad` when it is non-empty.
inline double dggd_posterior(std::span<const double> u, const SurvivalDataset& data,
                             const PriorSpec& priors, bool psi_free, std::span<double> grad) {
  const std::size_t q = data.width();
  const std::size_t dim = q + (psi_free ? 2 : 1);
  if (u.size() != dim) throw ValidationError("unconstrained vector has the wrong length");
  const bool want_grad = !grad.empty();
  if (want_grad && grad.size() != dim) throw ValidationError("gradient buffer has the wrong length");

  const std::span<const double> beta = u.first(q);
  const double a = u[q];
  const double s = psi_free ? u[q + 1] : 0.0;
  const double alpha = -std::exp(a);
  const double psi = std::exp(s);

  double d_alpha = 0.0, d_psi = 0.0;
  if (want_grad) std::fill(grad.begin(), grad.end(), 0.0);

  double lp = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto x = data.row(i);
    const TermGradient g = dggd_cure_term(data.time(i), data.event(i) == 1, linear_predictor(beta, x), alpha, psi);
    lp += g.value;
    if (want_grad) {
      for (std::size_t k = 0; k < q; ++k) grad[k] += g.d_eta * x[k];
      d_alpha += g.d_alpha;
      d_psi += g.d_psi;
    }
  }

  for (std::size_t k = 0; k < q; ++k) {
    const double sd = priors.beta_sd(k);
    lp += normal_lpdf(beta[k], priors.beta_mean(k), sd);
    if (want_grad) grad[k] -= (beta[k] - priors.beta_mean(k)) / (sd * sd);
  }
  lp += normal_lpdf(alpha, priors.alpha_mean, priors.alpha_sd) + a;
  if (want_grad) {
    d_alpha -= (alpha - priors.alpha_mean) / (priors.alpha_sd * priors.alpha_sd);
    grad[q] = d_alpha * alpha + 1.0;
  }
  if (psi_free) {
    lp += gamma_lpdf(psi, priors.psi_shape, priors.psi_rate) + s;
    if (want_grad) {
      d_psi += (priors.psi_shape - 1.0) / psi - priors.psi_rate;
      grad[q + 1] = d_psi * psi + 1.0;
    }
  }
  return lp;
}

inline std::vector<double> flatten(const UnconstrainedParams& u) {
  std::vector<double> v = u.beta;
  v.push_back(u.a);
  v.push_back(u.s);
  return v;
}

}  // namespace detail

/// log-likelihood + log-prior + log-Jacobian (a + s).
inline double log_posterior_unconstrained(const UnconstrainedParams& u, const SurvivalDataset& data,
                                          const PriorSpec& priors) {
  priors.validate(data.width());
  const auto flat = detail::flatten(u);
  return detail::dggd_posterior(flat, data, priors, true, {});
}

/// Analytic gradient in the layout (beta_0..beta_q, a, s).
inline std::vector<double> grad_log_posterior_unconstrained(const UnconstrainedParams& u,
                                                            const SurvivalDataset& data,
                                                            const PriorSpec& priors) {
  priors.validate(data.width());
  const auto flat = detail::flatten(u);
  std::vector<double> grad(flat.size());
  detail::dggd_posterior(flat, data, priors, true, grad);
  return grad;
}

}  // namespace defcure
