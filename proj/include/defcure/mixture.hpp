// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

// Weibull standard mixture cure model, used as the comparison baseline.
//
// Population survival is S_pop(t) = pi + (1 - pi) S_W(t) with pi the cure
// fraction, pi_i = logistic(x_i' beta). The improper density is
// (1 - pi) f_W(t). Unconstrained layout: (beta..., log lambda, log gamma).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "defcure/cure_regression.hpp"
#include "defcure/dataset.hpp"
#include "defcure/distributions.hpp"
#include "defcure/numeric.hpp"

namespace defcure {

struct MixtureParamVector {
  std::vector<double> beta;
  double lambda = 1.0;  // Weibull shape
  double gamma = 1.0;   // Weibull rate
};

namespace detail {
inline void require_cure_probability(double pi) {
  if (!(pi >= 0.0 && pi <= 1.0)) throw DomainError("cure probability must lie in [0, 1]");
}
}  // namespace detail

inline double mixture_log_survival(double t, double pi, const WeibullParams& w) {
  detail::require_cure_probability(pi);
  const double log_sw = weibull_log_survival(t, w);
  if (pi == 0.0) return log_sw;
  if (pi == 1.0) return 0.0;
  return log_sum_exp(std::log(pi), std::log1p(-pi) + log_sw);
}

inline double mixture_log_pdf(double t, double pi, const WeibullParams& w) {
  detail::require_cure_probability(pi);
  const double log_fw = weibull_log_pdf(t, w);
  if (pi == 1.0) return kNegInf;
  return std::log1p(-pi) + log_fw;
}

struct MixtureTermGradient {
  double value = 0.0;
  double d_eta = 0.0;
  double d_lambda = 0.0;
  double d_gamma = 0.0;
};

inline MixtureTermGradient mixture_term(double t, bool event, double eta, double lambda, double gamma) {
  MixtureTermGradient g;
  const bool saturated = std::abs(eta) > kLinkClamp;
  eta = std::clamp(eta, -kLinkClamp, kLinkClamp);
  const double pi = logistic(eta);
  const double log_pi = -softplus(-eta);
  const double log_1mpi = -softplus(eta);
  if (event) {
    const double lz = std::log(gamma * t);
    const double z = std::exp(lambda * lz);
    g.value = log_1mpi + std::log(lambda) + std::log(gamma) + (lambda - 1.0) * lz - z;
    g.d_eta = saturated ? 0.0 : -pi;
    g.d_lambda = 1.0 / lambda + lz - z * lz;
    g.d_gamma = lambda / gamma * (1.0 - z);
    return g;
  }
  if (!(t > 0.0)) return g;
  const double lz = std::log(gamma * t);
  const double z = std::exp(lambda * lz);
  g.value = log_sum_exp(log_pi, log_1mpi - z);
  const double w = std::exp(log_1mpi - z - g.value);  // share of the susceptible term
  g.d_eta = saturated ? 0.0 : pi * std::expm1(-g.value);
  g.d_lambda = -w * z * lz;
  g.d_gamma = -w * lambda * z / gamma;
  return g;
}

inline double mixture_observation_log_likelihood(const MixtureParamVector& theta, double t, bool event,
                                                 std::span<const double> x) {
  return mixture_term(t, event, linear_predictor(theta.beta, x), theta.lambda, theta.gamma).value;
}

inline double mixture_log_likelihood(const MixtureParamVector& theta, const SurvivalDataset& data) {
  require_positive(theta.lambda, "Weibull shape");
  require_positive(theta.gamma, "Weibull rate");
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i)
    total += mixture_observation_log_likelihood(theta, data.time(i), data.event(i) == 1, data.row(i));
  return total;
}

inline double mixture_log_prior(const MixtureParamVector& theta, const PriorSpec& priors) {
  priors.validate(theta.beta.size());
  double lp = 0.0;
  for (std::size_t k = 0; k < theta.beta.size(); ++k)
    lp += normal_lpdf(theta.beta[k], priors.beta_mean(k), priors.beta_sd(k));
  lp += gamma_lpdf(theta.lambda, priors.lambda_shape, priors.lambda_rate);
  lp += gamma_lpdf(theta.gamma, priors.gamma_shape, priors.gamma_rate);
  return lp;
}

namespace detail {

inline double mixture_posterior(std::span<const double> u, const SurvivalDataset& data,
                                const PriorSpec& priors, std::span<double> grad) {
  const std::size_t q = data.width();
  if (u.size() != q + 2) throw ValidationError("unconstrained vector has the wrong length");
  const bool want_grad = !grad.empty();
  if (want_grad && grad.size() != q + 2) throw ValidationError("gradient buffer has the wrong length");

  const std::span<const double> beta = u.first(q);
  const double lambda = std::exp(u[q]);
  const double gamma = std::exp(u[q + 1]);
  double d_lambda = 0.0, d_gamma = 0.0;
  if (want_grad) std::fill(grad.begin(), grad.end(), 0.0);

  double lp = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto x = data.row(i);
    const auto g = mixture_term(data.time(i), data.event(i) == 1, linear_predictor(beta, x), lambda, gamma);
    lp += g.value;
    if (want_grad) {
      for (std::size_t k = 0; k < q; ++k) grad[k] += g.d_eta * x[k];
      d_lambda += g.d_lambda;
      d_gamma += g.d_gamma;
    }
  }
  for (std::size_t k = 0; k < q; ++k) {
    const double sd = priors.beta_sd(k);
    lp += normal_lpdf(beta[k], priors.beta_mean(k), sd);
    if (want_grad) grad[k] -= (beta[k] - priors.beta_mean(k)) / (sd * sd);
  }
  lp += gamma_lpdf(lambda, priors.lambda_shape, priors.lambda_rate) + u[q];
  lp += gamma_lpdf(gamma, priors.gamma_shape, priors.gamma_rate) + u[q + 1];
  if (want_grad) {
    d_lambda += (priors.lambda_shape - 1.0) / lambda - priors.lambda_rate;
    d_gamma += (priors.gamma_shape - 1.0) / gamma - priors.gamma_rate;
    grad[q] = d_lambda * lambda + 1.0;
    grad[q + 1] = d_gamma * gamma + 1.0;
  }
  return lp;
}

}  // namespace detail

/// Unconstrained layout (beta..., log lambda, log gamma).
inline double mixture_log_posterior_unconstrained(std::span<const double> u, const SurvivalDataset& data,
                                                  const PriorSpec& priors) {
  priors.validate(data.width());
  return detail::mixture_posterior(u, data, priors, {});
}

inline std::vector<double> mixture_grad_log_posterior_unconstrained(std::span<const double> u,
                                                                    const SurvivalDataset& data,
                                                                    const PriorSpec& priors) {
  priors.validate(data.width());
  std::vector<double> grad(u.size());
  detail::mixture_posterior(u, data, priors, grad);
  return grad;
}

}  // namespace defcure
