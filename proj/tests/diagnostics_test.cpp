// Apache License, Version 2.0, refer to LICENSE.txt

#include <gtest/gtest.h>

#include <boost/multiprecision/cpp_bin_float.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "defcure/diagnostics.hpp"
#include "defcure/psis.hpp"
#include "defcure/simulator.hpp"

namespace defcure {
namespace {

using Wide = boost::multiprecision::cpp_bin_float_50;

double naive_log_cpo(const PointwiseLogLik& L, std::size_t i) {
  Wide acc = 0;
  for (std::size_t s = 0; s < L.draws; ++s) acc += boost::multiprecision::exp(Wide(-L.at(s, i)));
  return static_cast<double>(-boost::multiprecision::log(acc / L.draws));
}

SurvivalDataset one_row(double t, int event) { return SurvivalDataset({t}, {event}, {1.0}, {"(Intercept)"}); }

TEST(Residuals, MartingaleExamples) {
  const CureModel m(ModelSpec{}, one_row(1e-300, 0));
  const std::vector<double> theta{-1.3863, -1.0, 1.5};
  EXPECT_NEAR(martingale_residuals(m, theta)[0], 0.0, 1e-12);
  const CureModel e(ModelSpec{}, one_row(1e-300, 1));
  EXPECT_NEAR(martingale_residuals(e, theta)[0], 1.0, 1e-12);

  // S(t) = e^{-1} where the improper CDF reaches 1 - e^{-1}.
  const double p = logistic(theta[0]);
  const double t = dggd_quantile(1.0 - std::exp(-1.0), DGGDCureParams{-1.0, p, 1.5});
  const CureModel at(ModelSpec{}, one_row(t, 1));
  EXPECT_NEAR(martingale_residuals(at, theta)[0], 0.0, 1e-9);
}

TEST(Residuals, DevianceExamples) {
  EXPECT_EQ(deviance_residual(0.0, 0), 0.0);
  EXPECT_EQ(deviance_residual(0.0, 1), 0.0);
  EXPECT_NEAR(deviance_residual(-1.0, 0), -std::numbers::sqrt2, 1e-15);
  EXPECT_EQ(deviance_residual(1e-14, 0), 0.0);
  EXPECT_THROW(deviance_residual(0.5, 0), DomainError);
  EXPECT_THROW(deviance_residual(1.5, 1), DomainError);
}

TEST(Residuals, DevianceIsMonotoneAndSigned) {
  for (int event : {0, 1}) {
    double prev = 0.0;
    for (int k = 1; k <= 400; ++k) {
      const double r = -0.02 * k;
      const double d = deviance_residual(r, event);
      EXPECT_LT(d, 0.0);
      EXPECT_GT(std::abs(d), prev);
      prev = std::abs(d);
    }
  }
  double prev = 0.0;
  for (int k = 1; k < 100; ++k) {
    const double d = deviance_residual(0.01 * k, 1);
    EXPECT_GT(d, prev);
    prev = d;
  }
}

TEST(Residuals, ContractsOnSimulatedData) {
  const auto g = generate_dataset(TrueModel{}, 500, Rng(31));
  const CureModel m(ModelSpec{}, g.data);
  const auto set = residuals(m, TrueModel{}.constrained());
  for (std::size_t i = 0; i < set.martingale.size(); ++i) {
    EXPECT_LE(set.martingale[i], 1.0);
    EXPECT_EQ(set.deviance[i] == 0.0, set.martingale[i] == 0.0);
    if (set.martingale[i] != 0.0) EXPECT_EQ(std::signbit(set.deviance[i]), std::signbit(set.martingale[i]));
  }
}

TEST(Pointwise, MatchesLikelihoodAndOracle) {
  const auto g = generate_dataset(TrueModel{}, 3, Rng(32));
  const CureModel m(ModelSpec{}, g.data);
  const auto truth = TrueModel{}.constrained();
  const auto L1 = pointwise_loglik(m, std::vector<std::vector<double>>{truth});
  double row = 0.0;
  for (std::size_t i = 0; i < 3; ++i) row += L1.at(0, i);
  EXPECT_NEAR(row, log_likelihood(ParamVector{{-1.0, 0.5, 0.5}, -2.0, 2.0}, g.data), 1e-12);

  Rng rng(33);
  std::vector<std::vector<double>> draws;
  for (int s = 0; s < 5; ++s)
    draws.push_back({rng.uniform(-2, 0), rng.uniform(-1, 1), rng.uniform(-1, 1), -rng.uniform(0.5, 3), rng.uniform(0.5, 3)});
  draws.push_back(draws.back());
  const auto L = pointwise_loglik(m, draws);
  for (std::size_t s = 0; s < 5; ++s)
    for (std::size_t i = 0; i < 3; ++i) {
      const auto& d = draws[s];
      const double p = logistic(d[0] * g.data.row(i)[0] + d[1] * g.data.row(i)[1] + d[2] * g.data.row(i)[2]);
      const DGGDCureParams c{d[3], p, d[4]};
      const double oracle =
          g.data.event(i) ? dggd_cure_log_pdf(g.data.time(i), c) : dggd_cure_log_survival(g.data.time(i), c);
      EXPECT_NEAR(L.at(s, i), oracle, 1e-12 * std::max(1.0, std::abs(oracle)));
    }
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(L.at(4, i), L.at(5, i));

  draws[1][0] = std::nan("");
  try {
    pointwise_loglik(m, draws);
    FAIL() << "expected an error";
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("draw 2, observation 1"), std::string::npos);
  }
}

TEST(Cpo, Examples) {
  PointwiseLogLik same(4, 1);
  for (std::size_t s = 0; s < 4; ++s) same.at(s, 0) = -0.7;
  EXPECT_NEAR(cpo(same).cpo[0], std::exp(-0.7), 1e-15);

  PointwiseLogLik two(2, 1);
  two.at(0, 0) = 0.0;
  two.at(1, 0) = std::log(3.0);
  EXPECT_NEAR(cpo(two).cpo[0], 1.5, 1e-14);
  EXPECT_THROW(cpo(PointwiseLogLik(1, 1)), ValidationError);
}

TEST(Cpo, StableFormMatchesExtendedPrecision) {
  Rng rng(34);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t s = 2 + rng.next() % 49, n = 1 + rng.next() % 10;
    PointwiseLogLik L(s, n);
    for (double& v : L.values) v = rng.uniform(-60.0, 5.0);
    const auto r = cpo(L);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(r.log_cpo[i], naive_log_cpo(L, i), 1e-12);
  }
}

TEST(Lpml, SumsAndIsAdditive) {
  EXPECT_EQ(lpml(std::vector<double>{}), 0.0);
  EXPECT_EQ(lpml(std::vector<double>{-2.5}), -2.5);
  const std::vector<double> a{-1.0, -0.25}, b{-3.0}, all{-1.0, -0.25, -3.0};
  EXPECT_DOUBLE_EQ(lpml(all), lpml(a) + lpml(b));
}

TEST(Dic, DegenerateAndTwoDraw) {
  const auto g = generate_dataset(TrueModel{}, 50, Rng(35));
  const CureModel m(ModelSpec{}, g.data);
  const auto truth = TrueModel{}.constrained();
  const DicResult flat = dic(m, std::vector<std::vector<double>>(4, truth));
  EXPECT_NEAR(flat.p_d, 0.0, 1e-9);
  EXPECT_NEAR(flat.dic_half, flat.mean_deviance, 1e-9);
  EXPECT_NEAR(flat.dic_standard, flat.mean_deviance, 1e-9);

  const std::vector<double> a{-1.2, 0.4, 0.6, -1.8, 2.3}, b{-0.8, 0.6, 0.4, -2.2, 1.7};
  std::vector<double> mid(5);
  for (int j = 0; j < 5; ++j) mid[j] = 0.5 * (a[j] + b[j]);
  const auto dev = [&](const std::vector<double>& v) {
    return -2.0 * log_likelihood(ParamVector{{v[0], v[1], v[2]}, v[3], v[4]}, g.data);
  };
  const double d_bar = 0.5 * (dev(a) + dev(b));
  const double p_d = d_bar - dev(mid);
  const DicResult r = dic(m, std::vector<std::vector<double>>{a, b});
  EXPECT_NEAR(r.mean_deviance, d_bar, 1e-9);
  EXPECT_NEAR(r.p_d, p_d, 1e-9);
  EXPECT_NEAR(r.dic_half, d_bar + 0.5 * p_d, 1e-9);
  EXPECT_NEAR(r.dic_standard - r.dic_half, 0.5 * r.p_d, 1e-9);
  EXPECT_NEAR(r.dic_standard - r.mean_deviance, r.p_d, 1e-9);
}

TEST(Gpd, RecoversShape) {
  for (double k : {0.0, 0.5}) {
    Rng rng(36);
    std::vector<double> x(2000);
    for (double& v : x) v = gpd_quantile(rng.uniform_open(), k, 1.0);
    const GpdFit f = fit_gpd_tail(x);
    EXPECT_NEAR(f.k, k, 0.1);
    EXPECT_GT(f.sigma, 0.0);
  }
  const GpdFit flat = fit_gpd_tail(std::vector<double>(20, 0.3));
  EXPECT_TRUE(flat.degenerate);
  EXPECT_TRUE(std::isnan(flat.k));
  EXPECT_THROW(fit_gpd_tail(std::vector<double>{1, 2, 3}), DomainError);
}

TEST(Psis, Tiers) {
  EXPECT_EQ(pareto_tier(0.49), ParetoTier::ok);
  EXPECT_EQ(pareto_tier(0.5), ParetoTier::fair);
  EXPECT_EQ(pareto_tier(0.7), ParetoTier::bad);
  EXPECT_EQ(pareto_tier(1.0), ParetoTier::very_bad);
  EXPECT_EQ(pareto_tier(std::nan("")), ParetoTier::not_applicable);
}

TEST(Psis, ConstantRatiosAreInert) {
  const std::vector<double> lr(100, 2.0);
  const auto sm = psis_smooth(lr);
  EXPECT_TRUE(sm.degenerate);
  for (double w : sm.log_weights) EXPECT_EQ(w, 0.0);

  PointwiseLogLik L(100, 2);
  for (std::size_t s = 0; s < 100; ++s) {
    L.at(s, 0) = -1.25;
    L.at(s, 1) = -0.5;
  }
  const auto r = psis_loo(L);
  EXPECT_NEAR(r.elpd_i[0], -1.25, 1e-12);
  EXPECT_NEAR(r.elpd_i[1], -0.5, 1e-12);
  EXPECT_EQ(r.tier[0], ParetoTier::not_applicable);
  EXPECT_THROW(psis_smooth(std::vector<double>(24, 0.0)), DomainError);
}

TEST(Psis, TruncationCapHolds) {
  Rng rng(37);
  std::vector<double> lr(1000);
  for (double& v : lr) v = rng.normal();
  lr[17] = std::log(1e6) + *std::max_element(lr.begin(), lr.end());
  const auto sm = psis_smooth(lr);
  std::vector<double> w(sm.log_weights.size());
  double mean_before_cap = 0.0;
  for (std::size_t s = 0; s < w.size(); ++s) w[s] = std::exp(sm.log_weights[s]);
  for (double v : w) mean_before_cap += v;
  const double cap = std::exp(sm.log_cap);
  for (double v : w) EXPECT_LE(v, cap * (1 + 1e-12));
  EXPECT_GT(mean_before_cap, 0.0);
}

TEST(Psis, TailOrderKeepsBody) {
  Rng rng(38);
  std::vector<double> lr(200);
  for (double& v : lr) v = rng.normal();
  const auto sm = psis_smooth(lr);
  std::vector<std::size_t> order(lr.size());
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return lr[a] < lr[b]; });
  const double shift = *std::max_element(lr.begin(), lr.end());
  for (std::size_t k = 0; k + psis_tail_size(200) < 200; ++k)
    EXPECT_NEAR(sm.log_weights[order[k]], std::min(lr[order[k]] - shift, sm.log_cap), 1e-15);
}

TEST(Psis, SmoothingReducesVariance) {
  // Self-normalized importance estimate of E[x^2] = 2.25 under N(0, 1.5^2)
  // with proposals from N(0, 1); the weights have a heavy right tail.
  double raw_ss = 0.0, smooth_ss = 0.0;
  for (int rep = 0; rep < 200; ++rep) {
    Rng rng(39, {static_cast<std::uint64_t>(rep)});
    std::vector<double> x(400), lr(400);
    for (std::size_t s = 0; s < 400; ++s) {
      x[s] = rng.normal();
      lr[s] = 0.5 * x[s] * x[s] * (1.0 - 1.0 / 2.25);
    }
    const auto estimate = [&](const std::vector<double>& lw) {
      double num = 0.0, den = 0.0;
      for (std::size_t s = 0; s < x.size(); ++s) {
        num += std::exp(lw[s]) * x[s] * x[s];
        den += std::exp(lw[s]);
      }
      return num / den;
    };
    raw_ss += std::pow(estimate(lr) - 2.25, 2);
    smooth_ss += std::pow(estimate(psis_smooth(lr).log_weights) - 2.25, 2);
  }
  EXPECT_LT(smooth_ss, raw_ss);
}

TEST(Psis, HeavyTailIsBad) {
  Rng rng(40);
  std::vector<double> lr(4000);
  for (double& v : lr) v = std::log1p(gpd_quantile(rng.uniform_open(), 0.9, 1.0));
  const auto sm = psis_smooth(lr);
  EXPECT_NEAR(sm.k_hat, 0.9, 0.1);
  EXPECT_EQ(pareto_tier(sm.k_hat), ParetoTier::bad);
}

TEST(Psis, BoundedRatiosBarelyMove) {
  Rng rng(41);
  PointwiseLogLik L(4000, 1);
  std::vector<double> neg(4000);
  for (std::size_t s = 0; s < 4000; ++s) {
    L.at(s, 0) = -1.0 + 0.1 * rng.uniform();
    neg[s] = -L.at(s, 0);
  }
  const auto r = psis_loo(L);
  EXPECT_LT(r.k_hat[0], 0.0);
  const double raw = std::log(4000.0) - log_sum_exp(neg);
  EXPECT_LT(std::abs(r.elpd - raw), 1e-6 * std::abs(raw));
}

TEST(Psis, ConjugateNormalLoo) {
  const std::vector<double> y{-0.5, 0.3, 1.2, 0.1, -1.0, 2.5};
  const double tau2 = 100.0;
  const auto n = static_cast<double>(y.size());
  const double v = 1.0 / (n + 1.0 / tau2);
  double sum = 0.0;
  for (double yi : y) sum += yi;
  const double m = v * sum;

  Rng rng(42);
  PointwiseLogLik L(4000, y.size());
  for (std::size_t s = 0; s < 4000; ++s) {
    const double mu = m + std::sqrt(v) * rng.normal();
    for (std::size_t i = 0; i < y.size(); ++i) L.at(s, i) = normal_lpdf(y[i], mu, 1.0);
  }
  double exact = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double vi = 1.0 / (n - 1.0 + 1.0 / tau2);
    const double mi = vi * (sum - y[i]);
    exact += normal_lpdf(y[i], mi, std::sqrt(1.0 + vi));
  }
  EXPECT_NEAR(psis_loo(L).elpd, exact, 0.1);
}

}  // namespace
}  // namespace defcure
