// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

// Closed-form densities and survival functions for the defective Gompertz
// family, its power (Lehmann) extension, the cure-probability
// reparametrization of that extension, and the Weibull distribution.
//
// Everything is evaluated on the log scale. For alpha < 0 the Gompertz
// cumulative hazard H(t) = (mu/alpha)(e^{alpha t} - 1) is bounded by
// -mu/alpha, so the survival function levels off at a positive cure fraction.

#include <cmath>
#include <limits>

#include "defcure/numeric.hpp"

namespace defcure {

struct GompertzParams {
  double alpha;  // shape; negative means defective
  double mu;     // scale, > 0
};

struct DGGDParams {
  double alpha;
  double mu;
  double psi;  // power parameter, > 0
};

struct DGGDCureParams {
  double alpha;  // < 0
  double p;      // cure probability in (0, 1)
  double psi;
};

/// Weibull with S(t) = exp(-(rate * t)^shape).
struct WeibullParams {
  double shape;
  double rate;
};

/// Limit of the survival function. `proper` is set (and value is 0) when the
/// distribution integrates to one.
struct CureFraction {
  double value;
  bool proper;
};

inline void validate(const GompertzParams& p) {
  require_positive(p.mu, "Gompertz scale mu");
  if (!std::isfinite(p.alpha) || p.alpha == 0.0)
    throw DomainError("Gompertz shape alpha must be finite and nonzero");
}

inline void validate(const DGGDParams& p) {
  validate(GompertzParams{p.alpha, p.mu});
  require_positive(p.psi, "power parameter psi");
}

inline void validate(const DGGDCureParams& p) {
  if (!(p.alpha < 0.0) || !std::isfinite(p.alpha))
    throw DomainError("cure parametrization requires alpha < 0");
  if (!(p.p > 0.0 && p.p < 1.0)) throw DomainError("cure probability p must lie in (0, 1)");
  require_positive(p.psi, "power parameter psi");
}

inline void validate(const WeibullParams& p) {
  require_positive(p.shape, "Weibull shape");
  require_positive(p.rate, "Weibull rate");
}

namespace detail {

inline void require_time(double t, bool allow_zero) {
  if (std::isnan(t) || t < 0.0 || (!allow_zero && t == 0.0))
    throw DomainError(allow_zero ? "time must be non-negative" : "time must be positive");
}

// (mu/alpha) * expm1(alpha t). Saturates at the largest double when alpha > 0
// and alpha t overflows, so downstream log-scale values stay finite.
inline double gompertz_cumulative_hazard(double t, const GompertzParams& p) {
  const double h = (p.mu / p.alpha) * std::expm1(p.alpha * t);
  return std::isfinite(h) ? h : std::numeric_limits<double>::max();
}

inline double dggd_log_pdf_from_hazard(double t, double log_mu, double alpha, double psi,
                                       double hazard) {
  double out = std::log(psi) + log_mu + alpha * t - hazard;
  if (psi != 1.0) out += (psi - 1.0) * log1m_exp(-hazard);
  return out;
}

inline double dggd_log_survival_from_hazard(double psi, double hazard) {
  if (hazard <= 0.0) return 0.0;
  // e^{-H} underflows; 1 - (1 - e^{-H})^psi ~ psi e^{-H}.
  if (hazard > 700.0) return std::log(psi) - hazard;
  return log1m_exp(psi * log1m_exp(-hazard));
}

}  // namespace detail

inline double gompertz_log_pdf(double t, const GompertzParams& p) {
  detail::require_time(t, false);
  validate(p);
  return std::log(p.mu) + p.alpha * t - detail::gompertz_cumulative_hazard(t, p);
}

inline double gompertz_log_survival(double t, const GompertzParams& p) {
  detail::require_time(t, true);
  validate(p);
  return -detail::gompertz_cumulative_hazard(t, p);
}

inline CureFraction gompertz_cure_fraction(const GompertzParams& p) {
  validate(p);
  if (p.alpha > 0.0) return {0.0, true};
  return {std::exp(p.mu / p.alpha), false};
}

inline double dggd_log_pdf(double t, const DGGDParams& p) {
  detail::require_time(t, false);
  validate(p);
  const GompertzParams g{p.alpha, p.mu};
  return detail::dggd_log_pdf_from_hazard(t, std::log(p.mu), p.alpha, p.psi,
                                          detail::gompertz_cumulative_hazard(t, g));
}

inline double dggd_log_survival(double t, const DGGDParams& p) {
  detail::require_time(t, true);
  validate(p);
  return detail::dggd_log_survival_from_hazard(
      p.psi, detail::gompertz_cumulative_hazard(t, GompertzParams{p.alpha, p.mu}));
}

/// 1 - (1 - e^{mu/alpha})^psi for alpha < 0.
inline CureFraction dggd_cure_fraction(const DGGDParams& p) {
  validate(p);
  if (p.alpha > 0.0) return {0.0, true};
  return {-std::expm1(p.psi * log1m_exp(p.mu / p.alpha)), false};
}

/// Scale mu = alpha * ln(1 - (1 - p)^{1/psi}) that yields cure fraction p.
inline double reparam_to_scale(const DGGDCureParams& c) {
  validate(c);
  return c.alpha * log1m_exp(std::log1p(-c.p) / c.psi);
}

inline DGGDParams to_scale_params(const DGGDCureParams& c) {
  return {c.alpha, reparam_to_scale(c), c.psi};
}

inline double dggd_cure_log_pdf(double t, const DGGDCureParams& c) {
  return dggd_log_pdf(t, to_scale_params(c));
}

inline double dggd_cure_log_survival(double t, const DGGDCureParams& c) {
  return dggd_log_survival(t, to_scale_params(c));
}

/// Inverse of the (possibly improper) CDF F(t) = 1 - S(t).
///
/// Bisection on the log-survival scale, bracketed by [0, t_hi] where t_hi grows
/// geometrically, to an absolute tolerance of 1e-10 in t; one guarded Newton
/// step polishes the midpoint.
inline double dggd_quantile(double u, const DGGDParams& p) {
  validate(p);
  const CureFraction cure = dggd_cure_fraction(p);
  if (!(u > 0.0)) throw DomainError("quantile level must be positive");
  if (!(u < 1.0 - cure.value)) throw DomainError("mass exceeds susceptible fraction");

  const double target = std::log1p(-u);
  const auto reached = [&](double t) { return dggd_log_survival(t, p) <= target; };

  double lo = 0.0;
  double hi = 1.0 / std::abs(p.alpha);
  for (int grow = 0; !reached(hi); ++grow) {
    if (grow > 2000) throw DomainError("quantile bracket failed to close");
    lo = hi;
    hi *= 2.0;
  }
  constexpr double tol = 1e-10;
  while (hi - lo > tol) {
    const double mid = lo + 0.5 * (hi - lo);
    if (mid <= lo || mid >= hi) break;
    (reached(mid) ? hi : lo) = mid;
  }
  double t = lo + 0.5 * (hi - lo);
  if (t > 0.0) {
    const double cdf = -std::expm1(dggd_log_survival(t, p));
    const double newton = t - (cdf - u) / std::exp(dggd_log_pdf(t, p));
    if (std::isfinite(newton) && newton >= lo && newton <= hi) t = newton;
  }
  return t;
}

inline double dggd_quantile(double u, const DGGDCureParams& c) {
  return dggd_quantile(u, to_scale_params(c));
}

inline double weibull_log_pdf(double t, const WeibullParams& w) {
  detail::require_time(t, false);
  validate(w);
  const double log_gt = std::log(w.rate * t);
  return std::log(w.shape) + std::log(w.rate) + (w.shape - 1.0) * log_gt -
         std::exp(w.shape * log_gt);
}

inline double weibull_log_survival(double t, const WeibullParams& w) {
  detail::require_time(t, true);
  validate(w);
  if (t == 0.0) return 0.0;
  return -std::exp(w.shape * std::log(w.rate * t));
}

}  // namespace defcure
