// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "defcure/cure_regression.hpp"
#include "defcure/dataset.hpp"
#include "defcure/mixture.hpp"

namespace defcure {

enum class Family { dggd, gompertz, weibull_mixture };

inline std::string to_string(Family f) {
  switch (f) {
    case Family::dggd: return "dggd";
    case Family::gompertz: return "gompertz";
    case Family::weibull_mixture: return "weibull-mixture";
  }
  return "?";
}

inline Family parse_family(std::string_view name) {
  if (name == "dggd") return Family::dggd;
  if (name == "gompertz") return Family::gompertz;
  if (name == "weibull-mixture") return Family::weibull_mixture;
  throw ValidationError("unknown model family '" + std::string(name) + "'");
}

struct ModelSpec {
  Family family = Family::dggd;
  PriorSpec priors;
};

/// A model family bound to a dataset. Exposes the unconstrained log-posterior
/// and gradient for the sampler, plus per-observation evaluations on the
/// constrained scale for diagnostics.
///
/// Constrained layouts: dggd (beta..., alpha, psi); gompertz (beta..., alpha)
/// with psi fixed at 1; weibull-mixture (beta..., lambda, gamma).
class CureModel {
 public:
  CureModel(ModelSpec spec, SurvivalDataset data) : spec_(std::move(spec)), data_(std::move(data)) {
    spec_.priors.validate(data_.width());
  }

  const ModelSpec& spec() const { return spec_; }
  const SurvivalDataset& data() const { return data_; }
  Family family() const { return spec_.family; }
  std::size_t coefficients() const { return data_.width(); }

  std::size_t dimension() const { return coefficients() + (spec_.family == Family::gompertz ? 1 : 2); }

  std::vector<std::string> parameter_names() const {
    std::vector<std::string> names;
    for (std::size_t k = 0; k < coefficients(); ++k) names.push_back("beta" + std::to_string(k));
    switch (spec_.family) {
      case Family::dggd: names.insert(names.end(), {"alpha", "psi"}); break;
      case Family::gompertz: names.push_back("alpha"); break;
      case Family::weibull_mixture: names.insert(names.end(), {"lambda", "gamma"}); break;
    }
    return names;
  }

  double log_density(std::span<const double> u) const { return evaluate(u, {}); }

  /// Log-density at `u`; the gradient is written to `grad`.
  double log_density_gradient(std::span<const double> u, std::span<double> grad) const {
    return evaluate(u, grad);
  }

  std::vector<double> constrain(std::span<const double> u) const {
    std::vector<double> theta(u.begin(), u.end());
    const std::size_t q = coefficients();
    if (spec_.family == Family::weibull_mixture) {
      theta[q] = std::exp(u[q]);
      theta[q + 1] = std::exp(u[q + 1]);
    } else {
      theta[q] = -std::exp(u[q]);
      if (spec_.family == Family::dggd) theta[q + 1] = std::exp(u[q + 1]);
    }
    return theta;
  }

  std::vector<double> unconstrain(std::span<const double> theta) const {
    std::vector<double> u(theta.begin(), theta.end());
    const std::size_t q = coefficients();
    if (spec_.family == Family::weibull_mixture) {
      u[q] = std::log(theta[q]);
      u[q + 1] = std::log(theta[q + 1]);
    } else {
      u[q] = std::log(-theta[q]);
      if (spec_.family == Family::dggd) u[q + 1] = std::log(theta[q + 1]);
    }
    return u;
  }

  /// log f(t_i) for events, log S(t_i) for censored subjects.
  double observation_log_lik(std::span<const double> theta, std::size_t i) const {
    return observation(theta, i, data_.event(i) == 1);
  }

  double observation_log_survival(std::span<const double> theta, std::size_t i) const {
    return observation(theta, i, false);
  }

 private:
  double evaluate(std::span<const double> u, std::span<double> grad) const {
    if (spec_.family == Family::weibull_mixture) return detail::mixture_posterior(u, data_, spec_.priors, grad);
    return detail::dggd_posterior(u, data_, spec_.priors, spec_.family == Family::dggd, grad);
  }

  double observation(std::span<const double> theta, std::size_t i, bool event) const {
    for (double v : theta)
      if (!std::isfinite(v)) return std::numeric_limits<double>::quiet_NaN();
    const std::size_t q = coefficients();
    const double eta = linear_predictor(theta.first(q), data_.row(i));
    const double t = data_.time(i);
    switch (spec_.family) {
      case Family::dggd: return dggd_cure_term(t, event, eta, theta[q], theta[q + 1]).value;
      case Family::gompertz: return dggd_cure_term(t, event, eta, theta[q], 1.0).value;
      case Family::weibull_mixture: return mixture_term(t, event, eta, theta[q], theta[q + 1]).value;
    }
    return 0.0;
  }

  ModelSpec spec_;
  SurvivalDataset data_;
};

}  // namespace defcure
