// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

// No-U-Turn Hamiltonian Monte Carlo with multinomial trajectory sampling,
// the generalized U-turn criterion, dual-averaging step-size adaptation and a
// windowed diagonal metric estimated during warm-up.
//
// The metric is stored as its inverse: `inv_metric[j]` approximates the
// posterior variance of coordinate j, momenta are drawn as
// N(0, 1 / inv_metric[j]) and the kinetic energy is 0.5 * sum(inv_metric * p^2).

#include <algorithm>
#include <cmath>
#include <concepts>
#include <exception>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "defcure/numeric.hpp"
#include "defcure/posterior.hpp"
#include "defcure/rng.hpp"

namespace defcure {

template <class M>
concept DifferentiableDensity = requires(const M& m, std::span<const double> u, std::span<double> g) {
  { m.dimension() } -> std::convertible_to<std::size_t>;
  { m.log_density_gradient(u, g) } -> std::convertible_to<double>;
};

struct SamplerConfig {
  std::size_t chains = 4;
  std::size_t warmup_iters = 1000;
  std::size_t sampling_iters = 1000;
  std::uint64_t seed = 1;
  double target_accept = 0.8;
  int max_tree_depth = 10;
  double init_radius = 2.0;
  double max_delta_h = 1000.0;  // divergence threshold in nats
  bool parallel_chains = true;

  void validate() const {
    if (chains < 1 || sampling_iters < 1) throw ValidationError("chains and sampling iterations must be >= 1");
    if (!(target_accept > 0.0 && target_accept < 1.0)) throw ValidationError("target_accept must lie in (0, 1)");
    if (max_tree_depth < 0) throw ValidationError("max_tree_depth must be non-negative");
    if (!(init_radius > 0.0)) throw ValidationError("init_radius must be positive");
    if (!(max_delta_h > 0.0)) throw ValidationError("divergence threshold must be positive");
  }
};

/// Position, momentum and cached log-density/gradient at the position.
struct PhasePoint {
  std::vector<double> q;
  std::vector<double> p;
  std::vector<double> grad;
  double log_density = 0.0;

  bool finite() const {
    if (!std::isfinite(log_density)) return false;
    for (double g : grad)
      if (!std::isfinite(g)) return false;
    return true;
  }
};

inline double kinetic_energy(std::span<const double> p, std::span<const double> inv_metric) {
  double k = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) k += inv_metric[j] * p[j] * p[j];
  return 0.5 * k;
}

inline double hamiltonian(const PhasePoint& z, std::span<const double> inv_metric) {
  const double h = -z.log_density + kinetic_energy(z.p, inv_metric);
  return std::isnan(h) ? kInf : h;
}

/// Half-kick, drift, half-kick. `grad_fn(q, grad)` returns the log-density at
/// q and fills its gradient. Returns false when the new point has a
/// non-finite log-density or gradient.
template <class GradFn>
bool leapfrog(PhasePoint& z, double step_size, std::span<const double> inv_metric, GradFn&& grad_fn) {
  const std::size_t d = z.q.size();
  for (std::size_t j = 0; j < d; ++j) z.p[j] += 0.5 * step_size * z.grad[j];
  for (std::size_t j = 0; j < d; ++j) z.q[j] += step_size * inv_metric[j] * z.p[j];
  z.log_density = grad_fn(std::span<const double>(z.q), std::span<double>(z.grad));
  if (!z.finite()) return false;
  for (std::size_t j = 0; j < d; ++j) z.p[j] += 0.5 * step_size * z.grad[j];
  return true;
}

/// Dual averaging of the log step size toward a target acceptance statistic.
class StepSizeAdapter {
 public:
  explicit StepSizeAdapter(double target) : target_(target) {}

  void restart(double step_size) {
    mu_ = std::log(10.0 * step_size);
    counter_ = 0.0;
    s_bar_ = 0.0;
    x_bar_ = 0.0;
  }

  double learn(double accept_stat) {
    counter_ += 1.0;
    accept_stat = std::min(1.0, accept_stat);
    const double eta = 1.0 / (counter_ + kT0);
    s_bar_ = (1.0 - eta) * s_bar_ + eta * (target_ - accept_stat);
    const double x = mu_ - s_bar_ * std::sqrt(counter_) / kGamma;
    const double x_eta = std::pow(counter_, -kKappa);
    x_bar_ = (1.0 - x_eta) * x_bar_ + x_eta * x;
    return std::exp(x);
  }

  double final_step_size() const { return std::exp(x_bar_); }

 private:
  static constexpr double kGamma = 0.05;
  static constexpr double kT0 = 10.0;
  static constexpr double kKappa = 0.75;
  double target_;
  double mu_ = 0.0;
  double counter_ = 0.0;
  double s_bar_ = 0.0;
  double x_bar_ = 0.0;
};

/// Windowed warm-up schedule: an initial fast interval (step size only),
/// doubling slow windows that estimate the marginal variances, and a final
/// fast interval.
class MetricAdapter {
 public:
  MetricAdapter(std::size_t warmup, std::size_t dim) : warmup_(warmup), dim_(dim) {
    init_buffer_ = 75;
    term_buffer_ = 50;
    window_size_ = 25;
    if (init_buffer_ + window_size_ + term_buffer_ > warmup_) {
      init_buffer_ = static_cast<std::size_t>(0.15 * static_cast<double>(warmup_));
      term_buffer_ = static_cast<std::size_t>(0.1 * static_cast<double>(warmup_));
      window_size_ = warmup_ - (init_buffer_ + term_buffer_);
    }
    next_window_end_ = init_buffer_ + window_size_ - 1;
    reset_accumulator();
  }

  /// Feeds one warm-up position. Returns true when a window closed and
  /// `inv_metric` was updated.
  bool learn(std::span<const double> q, std::vector<double>& inv_metric) {
    const bool in_window = counter_ >= init_buffer_ && counter_ + term_buffer_ < warmup_ && counter_ != warmup_;
    if (in_window) accumulate(q);
    if (counter_ == next_window_end_ && counter_ != warmup_) {
      compute_next_window();
      const double n = static_cast<double>(count_);
      inv_metric.resize(dim_);
      for (std::size_t j = 0; j < dim_; ++j) {
        const double var = count_ > 1 ? m2_[j] / (n - 1.0) : 1.0;
        inv_metric[j] = (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0));
      }
      reset_accumulator();
      ++counter_;
      return true;
    }
    ++counter_;
    return false;
  }

 private:
  void compute_next_window() {
    if (next_window_end_ + term_buffer_ + 1 == warmup_) return;
    window_size_ *= 2;
    next_window_end_ = counter_ + window_size_;
    if (next_window_end_ + term_buffer_ + 1 != warmup_) {
      const std::size_t boundary = next_window_end_ + 2 * window_size_;
      if (boundary + term_buffer_ >= warmup_) next_window_end_ = warmup_ - term_buffer_ - 1;
    }
  }

  void reset_accumulator() {
    count_ = 0;
    mean_.assign(dim_, 0.0);
    m2_.assign(dim_, 0.0);
  }

  void accumulate(std::span<const double> q) {
    ++count_;
    for (std::size_t j = 0; j < dim_; ++j) {
      const double delta = q[j] - mean_[j];
      mean_[j] += delta / static_cast<double>(count_);
      m2_[j] += delta * (q[j] - mean_[j]);
    }
  }

  std::size_t warmup_;
  std::size_t dim_;
  std::size_t init_buffer_ = 0, term_buffer_ = 0, window_size_ = 0;
  std::size_t next_window_end_ = 0;
  std::size_t counter_ = 0;
  std::size_t count_ = 0;
  std::vector<double> mean_, m2_;
};

/// Result of one NUTS transition.
struct Transition {
  PhasePoint point;
  double accept_stat = 0.0;
  int tree_depth = 0;
  int n_leapfrog = 0;
  bool divergent = false;
  double energy = 0.0;
};

/// A single NUTS chain over `model`.
template <DifferentiableDensity Model>
class NutsChain {
 public:
  NutsChain(const Model& model, SamplerConfig config, std::size_t chain_index)
      : model_(model),
        config_(config),
        rng_(config.seed, {static_cast<std::uint64_t>(chain_index)}),
        dim_(model.dimension()),
        inv_metric_(dim_, 1.0) {}

  double step_size() const { return step_size_; }
  void set_step_size(double e) { step_size_ = e; }
  const std::vector<double>& inv_metric() const { return inv_metric_; }
  void set_inv_metric(std::vector<double> m) { inv_metric_ = std::move(m); }
  Rng& rng() { return rng_; }

  /// Point at `q` with cached log-density and gradient.
  PhasePoint make_point(std::span<const double> q) const {
    PhasePoint z;
    z.q.assign(q.begin(), q.end());
    z.p.assign(dim_, 0.0);
    z.grad.assign(dim_, 0.0);
    z.log_density = model_.log_density_gradient(z.q, z.grad);
    return z;
  }

  /// Uniform draw in [-init_radius, init_radius]^d with finite density.
  PhasePoint initial_point() {
    for (int attempt = 0; attempt < 100; ++attempt) {
      std::vector<double> q(dim_);
      for (double& v : q) v = rng_.uniform(-config_.init_radius, config_.init_radius);
      PhasePoint z = make_point(q);
      if (z.finite()) return z;
    }
    throw SamplerError("no initial point with finite log-density after 100 attempts");
  }

  /// One trajectory from `start`: doubles until a U-turn, a divergence or the
  /// depth limit, selecting the next state by multinomial weighting with
  /// progressive sampling biased toward the newest subtree. A divergent
  /// trajectory returns `start` with the divergence flag set.
  Transition transition(const PhasePoint& start) {
    PhasePoint z0 = start;
    for (std::size_t j = 0; j < dim_; ++j) z0.p[j] = rng_.normal() / std::sqrt(inv_metric_[j]);
    const double h0 = hamiltonian(z0, inv_metric_);

    PhasePoint z_fwd = z0, z_bck = z0, z_sample = z0, z_propose = z0;
    std::vector<double> p_sharp_fwd_bck = sharp(z0.p), p_sharp_fwd_fwd = p_sharp_fwd_bck;
    std::vector<double> p_sharp_bck_fwd = p_sharp_fwd_bck, p_sharp_bck_bck = p_sharp_fwd_bck;
    std::vector<double> p_fwd_bck = z0.p, p_fwd_fwd = z0.p, p_bck_fwd = z0.p, p_bck_bck = z0.p;
    std::vector<double> rho = z0.p;

    double log_sum_weight = 0.0;
    Trajectory traj{h0};
    int depth = 0;
    const int limit = std::max(1, config_.max_tree_depth);

    while (depth < limit) {
      std::vector<double> rho_fwd(dim_, 0.0), rho_bck(dim_, 0.0);
      double log_sum_weight_subtree = kNegInf;
      bool valid = false;
      if (rng_.uniform() > 0.5) {
        rho_bck = rho;
        p_bck_fwd = p_fwd_bck;
        p_sharp_bck_fwd = p_sharp_fwd_bck;
        valid = build_tree(depth, z_fwd, z_propose, p_sharp_fwd_bck, p_sharp_fwd_fwd, rho_fwd, p_fwd_bck,
                           p_fwd_fwd, +1.0, log_sum_weight_subtree, traj);
      } else {
        rho_fwd = rho;
        p_fwd_bck = p_bck_fwd;
        p_sharp_fwd_bck = p_sharp_bck_fwd;
        valid = build_tree(depth, z_bck, z_propose, p_sharp_bck_fwd, p_sharp_bck_bck, rho_bck, p_bck_fwd,
                           p_bck_bck, -1.0, log_sum_weight_subtree, traj);
      }
      if (!valid) break;
      ++depth;

      if (log_sum_weight_subtree > log_sum_weight) {
        z_sample = z_propose;
      } else if (rng_.uniform() < std::exp(log_sum_weight_subtree - log_sum_weight)) {
        z_sample = z_propose;
      }
      log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);

      for (std::size_t j = 0; j < dim_; ++j) rho[j] = rho_bck[j] + rho_fwd[j];
      bool persist = u_turn_free(p_sharp_bck_bck, p_sharp_fwd_fwd, rho);
      std::vector<double> rho_ext(dim_);
      for (std::size_t j = 0; j < dim_; ++j) rho_ext[j] = rho_bck[j] + p_fwd_bck[j];
      persist = persist && u_turn_free(p_sharp_bck_bck, p_sharp_fwd_bck, rho_ext);
      for (std::size_t j = 0; j < dim_; ++j) rho_ext[j] = rho_fwd[j] + p_bck_fwd[j];
      persist = persist && u_turn_free(p_sharp_bck_fwd, p_sharp_fwd_fwd, rho_ext);
      if (!persist) break;
    }

    Transition out;
    out.divergent = traj.divergent;
    out.tree_depth = depth;
    out.n_leapfrog = traj.n_leapfrog;
    out.accept_stat = traj.n_leapfrog > 0 ? traj.sum_metro_prob / traj.n_leapfrog : 0.0;
    out.point = traj.divergent ? z0 : z_sample;
    out.energy = hamiltonian(out.point, inv_metric_);
    return out;
  }

  /// Doubles or halves the step size until a single leapfrog step's
  /// acceptance probability crosses 0.8.
  void init_step_size(const PhasePoint& at) {
    if (!(step_size_ > 0.0) || step_size_ > 1e7 || !std::isfinite(step_size_)) return;
    const auto accept_log = [&] {
      PhasePoint z = at;
      for (std::size_t j = 0; j < dim_; ++j) z.p[j] = rng_.normal() / std::sqrt(inv_metric_[j]);
      const double h0 = hamiltonian(z, inv_metric_);
      const bool ok = leapfrog(z, step_size_, inv_metric_, grad_fn());
      const double h = ok ? hamiltonian(z, inv_metric_) : kInf;
      return h0 - h;
    };
    const double log08 = std::log(0.8);
    const int direction = accept_log() > log08 ? 1 : -1;
    for (int iter = 0; iter < 200; ++iter) {
      const double delta = accept_log();
      if (direction == 1 && !(delta > log08)) break;
      if (direction == -1 && !(delta < log08)) break;
      step_size_ = direction == 1 ? 2.0 * step_size_ : 0.5 * step_size_;
      if (step_size_ > 1e7) throw SamplerError("step size diverged to infinity during initialization");
      if (step_size_ == 0.0) throw SamplerError("step size collapsed to zero during initialization");
    }
  }

  /// Warm-up followed by sampling. Warm-up draws are discarded.
  template <class Constrain>
  ChainResult run(Constrain&& constrain) {
    ChainResult result;
    PhasePoint z = initial_point();
    step_size_ = 1.0;
    init_step_size(z);

    StepSizeAdapter step_adapter(config_.target_accept);
    step_adapter.restart(step_size_);
    const bool adapt_metric = config_.warmup_iters >= 20;
    MetricAdapter metric_adapter(config_.warmup_iters, dim_);

    double late_accept = 0.0;
    std::size_t late_count = 0;
    for (std::size_t it = 0; it < config_.warmup_iters; ++it) {
      Transition tr = transition(z);
      z = std::move(tr.point);
      if (tr.divergent) ++result.warmup_divergences;
      if (2 * it >= config_.warmup_iters) {
        late_accept += tr.accept_stat;
        ++late_count;
      }
      step_size_ = step_adapter.learn(tr.accept_stat);
      if (adapt_metric && metric_adapter.learn(z.q, inv_metric_)) {
        init_step_size(z);
        step_adapter.restart(step_size_);
      }
    }
    if (config_.warmup_iters > 0) {
      if (result.warmup_divergences == config_.warmup_iters)
        throw SamplerError("every warm-up transition diverged; the posterior is too ill-conditioned for the sampler");
      step_size_ = step_adapter.final_step_size();
    }
    result.warmup_accept_stat = late_count ? late_accept / static_cast<double>(late_count) : 0.0;

    result.draws.reserve(config_.sampling_iters);
    for (std::size_t it = 0; it < config_.sampling_iters; ++it) {
      Transition tr = transition(z);
      z = std::move(tr.point);
      DrawRecord rec;
      rec.unconstrained = z.q;
      rec.constrained = constrain(std::span<const double>(z.q));
      rec.log_density = z.log_density;
      rec.divergent = tr.divergent;
      rec.tree_depth = tr.tree_depth;
      rec.n_leapfrog = tr.n_leapfrog;
      rec.energy = tr.energy;
      rec.accept_stat = tr.accept_stat;
      result.draws.push_back(std::move(rec));
    }
    result.step_size = step_size_;
    result.inv_metric = inv_metric_;
    return result;
  }

 private:
  struct Trajectory {
    double h0;
    int n_leapfrog = 0;
    double sum_metro_prob = 0.0;
    bool divergent = false;
  };

  auto grad_fn() const {
    return [this](std::span<const double> q, std::span<double> g) { return model_.log_density_gradient(q, g); };
  }

  std::vector<double> sharp(std::span<const double> p) const {
    std::vector<double> out(dim_);
    for (std::size_t j = 0; j < dim_; ++j) out[j] = inv_metric_[j] * p[j];
    return out;
  }

  static bool u_turn_free(std::span<const double> p_sharp_minus, std::span<const double> p_sharp_plus,
                          std::span<const double> rho) {
    double plus = 0.0, minus = 0.0;
    for (std::size_t j = 0; j < rho.size(); ++j) {
      plus += p_sharp_plus[j] * rho[j];
      minus += p_sharp_minus[j] * rho[j];
    }
    return plus > 0.0 && minus > 0.0;
  }

  bool build_tree(int depth, PhasePoint& z, PhasePoint& z_propose, std::vector<double>& p_sharp_beg,
                  std::vector<double>& p_sharp_end, std::vector<double>& rho, std::vector<double>& p_beg,
                  std::vector<double>& p_end, double direction, double& log_sum_weight, Trajectory& traj) {
    if (depth == 0) {
      const bool ok = leapfrog(z, direction * step_size_, inv_metric_, grad_fn());
      ++traj.n_leapfrog;
      const double h = ok ? hamiltonian(z, inv_metric_) : kInf;
      if (!ok || h - traj.h0 > config_.max_delta_h) traj.divergent = true;
      log_sum_weight = log_sum_exp(log_sum_weight, traj.h0 - h);
      traj.sum_metro_prob += traj.h0 - h > 0.0 ? 1.0 : std::exp(traj.h0 - h);
      z_propose = z;
      p_sharp_beg = sharp(z.p);
      p_sharp_end = p_sharp_beg;
      for (std::size_t j = 0; j < dim_; ++j) rho[j] += z.p[j];
      p_beg = z.p;
      p_end = p_beg;
      return !traj.divergent;
    }

    double log_sum_weight_init = kNegInf;
    std::vector<double> p_init_end(dim_, 0.0), p_sharp_init_end(dim_, 0.0), rho_init(dim_, 0.0);
    if (!build_tree(depth - 1, z, z_propose, p_sharp_beg, p_sharp_init_end, rho_init, p_beg, p_init_end, direction,
                    log_sum_weight_init, traj))
      return false;

    PhasePoint z_propose_final = z;
    double log_sum_weight_final = kNegInf;
    std::vector<double> p_final_beg(dim_, 0.0), p_sharp_final_beg(dim_, 0.0), rho_final(dim_, 0.0);
    if (!build_tree(depth - 1, z, z_propose_final, p_sharp_final_beg, p_sharp_end, rho_final, p_final_beg, p_end,
                    direction, log_sum_weight_final, traj))
      return false;

    const double log_sum_weight_subtree = log_sum_exp(log_sum_weight_init, log_sum_weight_final);
    log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);
    if (log_sum_weight_final > log_sum_weight_subtree) {
      z_propose = z_propose_final;
    } else if (rng_.uniform() < std::exp(log_sum_weight_final - log_sum_weight_subtree)) {
      z_propose = z_propose_final;
    }

    std::vector<double> rho_subtree(dim_);
    for (std::size_t j = 0; j < dim_; ++j) {
      rho_subtree[j] = rho_init[j] + rho_final[j];
      rho[j] += rho_subtree[j];
    }
    bool persist = u_turn_free(p_sharp_beg, p_sharp_end, rho_subtree);
    std::vector<double> rho_ext(dim_);
    for (std::size_t j = 0; j < dim_; ++j) rho_ext[j] = rho_init[j] + p_final_beg[j];
    persist = persist && u_turn_free(p_sharp_beg, p_sharp_final_beg, rho_ext);
    for (std::size_t j = 0; j < dim_; ++j) rho_ext[j] = rho_final[j] + p_init_end[j];
    persist = persist && u_turn_free(p_sharp_init_end, p_sharp_end, rho_ext);
    return persist;
  }

  const Model& model_;
  SamplerConfig config_;
  Rng rng_;
  std::size_t dim_;
  std::vector<double> inv_metric_;
  double step_size_ = 1.0;
};

/// Runs `config.chains` independent chains and returns their retained draws,
/// ordered by chain index. Chains run on separate threads when
/// `config.parallel_chains` is set; the output does not depend on scheduling.
template <DifferentiableDensity Model>
PosteriorDraws sample(const Model& model, const SamplerConfig& config, std::vector<std::string> names = {}) {
  config.validate();
  const std::size_t dim = model.dimension();
  if (names.empty())
    for (std::size_t j = 0; j < dim; ++j) names.push_back("x" + std::to_string(j));

  const auto constrain = [&model](std::span<const double> u) -> std::vector<double> {
    if constexpr (requires { model.constrain(u); }) {
      return model.constrain(u);
    } else {
      return {u.begin(), u.end()};
    }
  };

  std::vector<ChainResult> results(config.chains);
  std::vector<std::exception_ptr> errors(config.chains);
  const auto run_chain = [&](std::size_t c) {
    try {
      NutsChain<Model> chain(model, config, c);
      results[c] = chain.run(constrain);
    } catch (...) {
      errors[c] = std::current_exception();
    }
  };

  if (config.parallel_chains && config.chains > 1) {
    std::vector<std::jthread> threads;
    for (std::size_t c = 0; c < config.chains; ++c) threads.emplace_back(run_chain, c);
  } else {
    for (std::size_t c = 0; c < config.chains; ++c) run_chain(c);
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return PosteriorDraws(std::move(names), std::move(results));
}

}  // namespace defcure
