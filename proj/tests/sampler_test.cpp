// Apache License, Version 2.0, refer to LICENSE.txt

#include <gtest/gtest.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <span>
#include <vector>

#include "defcure/nuts.hpp"
#include "defcure/posterior.hpp"

namespace defcure {
namespace {

/// Independent Gaussian with the given variances.
struct DiagGaussian {
  std::vector<double> var;
  std::size_t dimension() const { return var.size(); }
  double log_density_gradient(std::span<const double> q, std::span<double> g) const {
    double lp = 0.0;
    for (std::size_t j = 0; j < var.size(); ++j) {
      lp -= 0.5 * q[j] * q[j] / var[j];
      g[j] = -q[j] / var[j];
    }
    return lp;
  }
};

/// Rosenbrock-style banana: x ~ N(0, 1), y | x ~ N(b x^2, 1).
struct Banana {
  double b = 0.5;
  std::size_t dimension() const { return 2; }
  double log_density_gradient(std::span<const double> q, std::span<double> g) const {
    const double r = q[1] - b * q[0] * q[0];
    g[0] = -q[0] + 2.0 * b * q[0] * r;
    g[1] = -r;
    return -0.5 * q[0] * q[0] - 0.5 * r * r;
  }
};

/// Finite only at the first point evaluated.
struct Cliff {
  mutable std::atomic<int> calls{0};
  std::size_t dimension() const { return 1; }
  double log_density_gradient(std::span<const double>, std::span<double> g) const {
    g[0] = 0.0;
    return calls++ == 0 ? 0.0 : kNegInf;
  }
};

auto gradient_of(const auto& model) {
  return [&model](std::span<const double> q, std::span<double> g) { return model.log_density_gradient(q, g); };
}

PhasePoint point_at(const auto& model, std::vector<double> q, std::vector<double> p) {
  PhasePoint z;
  z.q = std::move(q);
  z.p = std::move(p);
  z.grad.assign(z.q.size(), 0.0);
  z.log_density = model.log_density_gradient(z.q, z.grad);
  return z;
}

TEST(Leapfrog, StillPointStaysPut) {
  struct Flat {
    std::size_t dimension() const { return 2; }
    double log_density_gradient(std::span<const double>, std::span<double> g) const {
      std::fill(g.begin(), g.end(), 0.0);
      return 0.0;
    }
  } flat;
  PhasePoint z = point_at(flat, {0.3, -1.0}, {0.0, 0.0});
  const std::vector<double> ones{1.0, 1.0};
  ASSERT_TRUE(leapfrog(z, 0.7, ones, gradient_of(flat)));
  EXPECT_EQ(z.q, (std::vector<double>{0.3, -1.0}));
}

TEST(Leapfrog, EnergyErrorShrinksQuadratically) {
  const DiagGaussian g{{1.0}};
  const std::vector<double> m{1.0};
  double prev = kInf;
  for (double eps : {0.2, 0.1, 0.05, 0.025}) {
    PhasePoint z = point_at(g, {0.8}, {0.6});
    const double h0 = hamiltonian(z, m);
    ASSERT_TRUE(leapfrog(z, eps, m, gradient_of(g)));
    const double err = std::abs(hamiltonian(z, m) - h0);
    EXPECT_LE(err, eps * eps);
    EXPECT_LT(err, prev);
    prev = err;
    const double exact_q = 0.8 * std::cos(eps) + 0.6 * std::sin(eps);
    EXPECT_NEAR(z.q[0], exact_q, eps * eps * eps);
  }
}

TEST(Leapfrog, ReversibleUnderMomentumFlip) {
  const Banana b;
  const std::vector<double> m{1.3, 0.7};
  PhasePoint z = point_at(b, {0.4, -0.2}, {0.9, -1.1});
  const PhasePoint start = z;
  for (int k = 0; k < 10; ++k) ASSERT_TRUE(leapfrog(z, 0.1, m, gradient_of(b)));
  for (double& p : z.p) p = -p;
  for (int k = 0; k < 10; ++k) ASSERT_TRUE(leapfrog(z, 0.1, m, gradient_of(b)));
  for (std::size_t j = 0; j < 2; ++j) {
    EXPECT_NEAR(z.q[j], start.q[j], 1e-12);
    EXPECT_NEAR(-z.p[j], start.p[j], 1e-12);
  }
}

TEST(Leapfrog, PreservesVolume) {
  const Banana b;
  const std::vector<double> m{1.0, 1.0};
  const auto step = [&](std::vector<double> s) {
    PhasePoint z = point_at(b, {s[0], s[1]}, {s[2], s[3]});
    leapfrog(z, 0.15, m, gradient_of(b));
    return std::vector<double>{z.q[0], z.q[1], z.p[0], z.p[1]};
  };
  const std::vector<double> s{0.3, 0.1, -0.4, 0.8};
  double jac[4][4];
  for (int c = 0; c < 4; ++c) {
    auto up = s, down = s;
    up[c] += 1e-6;
    down[c] -= 1e-6;
    const auto fu = step(up), fd = step(down);
    for (int r = 0; r < 4; ++r) jac[r][c] = (fu[r] - fd[r]) / 2e-6;
  }
  // Determinant by Gaussian elimination with partial pivoting.
  double det = 1.0;
  for (int c = 0; c < 4; ++c) {
    int piv = c;
    for (int r = c + 1; r < 4; ++r)
      if (std::abs(jac[r][c]) > std::abs(jac[piv][c])) piv = r;
    if (piv != c) {
      for (int k = 0; k < 4; ++k) std::swap(jac[c][k], jac[piv][k]);
      det = -det;
    }
    det *= jac[c][c];
    for (int r = c + 1; r < 4; ++r) {
      const double f = jac[r][c] / jac[c][c];
      for (int k = c; k < 4; ++k) jac[r][k] -= f * jac[c][k];
    }
  }
  EXPECT_NEAR(det, 1.0, 1e-6);
}

TEST(Nuts, DepthZeroTakesOneStep) {
  const DiagGaussian g{{1.0, 1.0, 1.0}};
  SamplerConfig cfg;
  cfg.max_tree_depth = 0;
  NutsChain<DiagGaussian> chain(g, cfg, 0);
  chain.set_step_size(0.3);
  PhasePoint z = chain.make_point(std::vector<double>{0.1, 0.2, 0.3});
  for (int k = 0; k < 50; ++k) {
    const Transition tr = chain.transition(z);
    EXPECT_EQ(tr.n_leapfrog, 1);
    z = tr.point;
  }
}

TEST(Nuts, HugeStepIsDivergent) {
  const DiagGaussian g{std::vector<double>(5, 1.0)};
  NutsChain<DiagGaussian> chain(g, SamplerConfig{}, 0);
  chain.set_step_size(1e4);
  const PhasePoint z = chain.make_point(std::vector<double>(5, 0.5));
  const Transition tr = chain.transition(z);
  EXPECT_TRUE(tr.divergent);
  EXPECT_EQ(tr.point.q, z.q);
}

TEST(Nuts, DivergenceRateGrowsWithStepSize) {
  const DiagGaussian g{std::vector<double>(10, 1.0)};
  double prev = -1.0;
  for (double eps : {0.5, 3.0, 20.0}) {
    NutsChain<DiagGaussian> chain(g, SamplerConfig{}, 0);
    chain.set_step_size(eps);
    PhasePoint z = chain.make_point(std::vector<double>(10, 0.1));
    int divergent = 0;
    for (int k = 0; k < 300; ++k) {
      const Transition tr = chain.transition(z);
      divergent += tr.divergent ? 1 : 0;
      z = tr.point;
    }
    const double rate = divergent / 300.0;
    EXPECT_GE(rate, prev);
    prev = rate;
  }
  EXPECT_GT(prev, 0.5);
}

TEST(Nuts, AdaptsMetricToMarginalVariances) {
  const DiagGaussian g{{1.0, 100.0}};
  SamplerConfig cfg;
  cfg.chains = 1;
  cfg.seed = 4;
  const PosteriorDraws d = sample(g, cfg);
  const auto& m = d.chain(0).inv_metric;
  EXPECT_GT(m[0], 1.0 / 1.5);
  EXPECT_LT(m[0], 1.5);
  EXPECT_GT(m[1], 100.0 / 1.5);
  EXPECT_LT(m[1], 150.0);
  EXPECT_GT(d.chain(0).step_size, 0.0);
  EXPECT_TRUE(std::isfinite(d.chain(0).step_size));
}

TEST(Nuts, StandardNormalCalibration) {
  const DiagGaussian g{std::vector<double>(10, 1.0)};
  SamplerConfig cfg;
  cfg.seed = 17;
  const PosteriorDraws d = sample(g, cfg);
  ASSERT_EQ(d.total_draws(), 4000u);
  EXPECT_EQ(d.divergences(), 0u);
  for (std::size_t j = 0; j < 10; ++j) {
    EXPECT_LT(std::abs(d.mean(j)), 3.0 * d.mcse(j));
    EXPECT_NEAR(d.sd(j) * d.sd(j), 1.0, 0.1);
    EXPECT_LT(d.rhat(j), 1.01);
  }
  for (std::size_t c = 0; c < d.chains(); ++c) EXPECT_NEAR(d.chain(c).warmup_accept_stat, cfg.target_accept, 0.1);
}

TEST(Nuts, BananaMixes) {
  const Banana b;
  SamplerConfig cfg;
  cfg.sampling_iters = 2000;
  cfg.seed = 8;
  const PosteriorDraws d = sample(b, cfg);
  EXPECT_LT(d.rhat(0), 1.01);
  EXPECT_LT(d.rhat(1), 1.01);
  EXPECT_NEAR(d.mean(1), 0.5, 0.1);
}

TEST(Nuts, StationaryDistributionPassesKs) {
  const DiagGaussian g{{1.0}};
  SamplerConfig cfg;
  cfg.chains = 1;
  cfg.sampling_iters = 100000;
  cfg.seed = 99;
  auto v = sample(g, cfg).values(0);
  std::sort(v.begin(), v.end());
  double ks = 0.0;
  const double n = static_cast<double>(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double cdf = 0.5 * std::erfc(-v[i] / std::sqrt(2.0));
    ks = std::max({ks, std::abs(cdf - i / n), std::abs(cdf - (i + 1) / n)});
  }
  EXPECT_LT(ks, 1.628 / std::sqrt(n));
}

TEST(Nuts, DeterministicAndChainSpecific) {
  const Banana b;
  SamplerConfig cfg;
  cfg.warmup_iters = 200;
  cfg.sampling_iters = 200;
  cfg.seed = 3;
  const PosteriorDraws a = sample(b, cfg), c = sample(b, cfg);
  for (std::size_t ch = 0; ch < cfg.chains; ++ch)
    for (std::size_t i = 0; i < 200; ++i) EXPECT_EQ(a.chain(ch).draws[i].unconstrained, c.chain(ch).draws[i].unconstrained);
  EXPECT_NE(a.chain(0).draws.back().unconstrained, a.chain(1).draws.back().unconstrained);
  cfg.parallel_chains = false;
  const PosteriorDraws s = sample(b, cfg);
  EXPECT_EQ(s.chain(2).draws.back().unconstrained, a.chain(2).draws.back().unconstrained);
}

TEST(Nuts, AllDivergentWarmupFails) {
  const Cliff cliff;
  SamplerConfig cfg;
  cfg.chains = 1;
  cfg.warmup_iters = 30;
  EXPECT_THROW(sample(cliff, cfg), SamplerError);
}

TEST(Nuts, RejectsBadConfig) {
  SamplerConfig cfg;
  cfg.target_accept = 1.0;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = {};
  cfg.chains = 0;
  EXPECT_THROW(cfg.validate(), ValidationError);
}

TEST(Summaries, QuantileAndEss) {
  EXPECT_DOUBLE_EQ(quantile({1.0, 2.0, 3.0, 4.0}, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile({1.0, 2.0, 3.0, 4.0}, 0.025), 1.075);
  const std::vector<std::vector<double>> shifted{{0, 1, 0, 1, 0, 1, 0, 1}, {10, 11, 10, 11, 10, 11, 10, 11}};
  EXPECT_GT(split_rhat(shifted), 2.0);
}

}  // namespace
}  // namespace defcure
