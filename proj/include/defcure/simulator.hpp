// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

// Synthetic data from the cure-parametrized DGGD regression and the
// Monte-Carlo calibration study (relative bias and 95% interval coverage).
//
// Per subject: x1 ~ Bernoulli(0.5), x2 ~ Normal(0, 1), p = logistic(x'beta),
// M ~ Bernoulli(1 - p). Cured subjects (M = 0) never fail; susceptible ones
// get t* = F^{-1}(u) with u ~ Uniform(0, 1 - p). Censoring times are
// Uniform(0, max finite t*), shared bound per dataset.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "defcure/cure_regression.hpp"
#include "defcure/dataset.hpp"
#include "defcure/distributions.hpp"
#include "defcure/model.hpp"
#include "defcure/nuts.hpp"
#include "defcure/posterior.hpp"
#include "defcure/rng.hpp"

namespace defcure {

struct TrueModel {
  std::vector<double> beta{-1.0, 0.5, 0.5};
  double alpha = -2.0;
  double psi = 2.0;

  void validate() const {
    if (beta.size() != 3) throw ValidationError("simulation uses exactly three coefficients (intercept, x1, x2)");
    for (double b : beta)
      if (!std::isfinite(b)) throw ValidationError("true coefficients must be finite");
    if (!(alpha < 0.0)) throw ValidationError("true alpha must be negative");
    if (!(psi > 0.0)) throw ValidationError("true psi must be positive");
  }

  std::vector<double> constrained() const {
    std::vector<double> v = beta;
    v.push_back(alpha);
    v.push_back(psi);
    return v;
  }
};

struct GeneratedDataset {
  SurvivalDataset data;
  std::vector<double> latent_times;  // t*, +inf for cured subjects
  std::vector<int> susceptible;      // M_i
  std::size_t attempts = 1;
  bool all_cured = false;  // no finite t*: censoring fell back to Uniform(0, 1)
};

/// One draw of the generating process. When no subject is susceptible the
/// draw is repeated on fresh substreams of `rng` (at most 100 attempts); if all
/// attempts are fully cured, censoring times fall back to Uniform(0, 1) and
/// every subject is censored.
inline GeneratedDataset generate_dataset(const TrueModel& truth, std::size_t n, const Rng& rng) {
  truth.validate();
  if (n < 1) throw ValidationError("sample size must be at least 1");
  constexpr std::size_t kMaxAttempts = 100;

  GeneratedDataset out;
  std::vector<double> x1(n), x2(n);
  Rng stream = rng.substream(0);
  for (std::size_t attempt = 0; attempt < kMaxAttempts; ++attempt) {
    stream = rng.substream(attempt);
    out.latent_times.assign(n, kInf);
    out.susceptible.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
      x1[i] = stream.bernoulli(0.5) ? 1.0 : 0.0;
      x2[i] = stream.normal();
      const double row[3] = {1.0, x1[i], x2[i]};
      const double p = cure_probability(truth.beta, row);
      if (!stream.bernoulli(1.0 - p)) continue;
      out.susceptible[i] = 1;
      const DGGDParams scale = to_scale_params(DGGDCureParams{truth.alpha, p, truth.psi});
      const double mass = 1.0 - dggd_cure_fraction(scale).value;
      out.latent_times[i] = dggd_quantile(stream.uniform_open() * mass, scale);
    }
    out.attempts = attempt + 1;
    if (std::any_of(out.latent_times.begin(), out.latent_times.end(), [](double t) { return std::isfinite(t); }))
      break;
  }

  double bound = 0.0;
  for (double t : out.latent_times)
    if (std::isfinite(t)) bound = std::max(bound, t);
  out.all_cured = bound == 0.0;
  if (out.all_cured) bound = 1.0;

  std::vector<double> time(n), cov;
  std::vector<int> event(n);
  cov.reserve(3 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const double c = stream.uniform_open() * bound;
    const double t_star = out.latent_times[i];
    event[i] = t_star <= c ? 1 : 0;
    time[i] = std::min(t_star, c);
    cov.insert(cov.end(), {1.0, x1[i], x2[i]});
  }
  out.data = SurvivalDataset(std::move(time), std::move(event), std::move(cov), {"(Intercept)", "x1", "x2"});
  return out;
}

struct StudyConfig {
  std::vector<std::size_t> sample_sizes{100, 300, 500, 1000};
  std::size_t replicates = 1000;
  SamplerConfig sampler;
  TrueModel truth;
  PriorSpec priors;
  std::uint64_t seed = 1;
  std::size_t threads = 0;  // 0 = hardware concurrency

  void validate() const {
    truth.validate();
    sampler.validate();
    priors.validate(truth.beta.size());
    if (sample_sizes.empty() || replicates < 1) throw ValidationError("study needs sample sizes and replicates");
    for (std::size_t n : sample_sizes)
      if (n < 1) throw ValidationError("sample sizes must be positive");
  }
};

/// Per-replicate posterior summary for the study.
struct ReplicateFit {
  bool ok = false;
  std::string error;
  std::vector<double> mean, sd, ci_low, ci_high;
};

struct StudyRow {
  std::size_t n = 0;
  std::string parameter;
  double truth = 0.0;
  double mean = 0.0;      // mean of posterior means
  double sd = 0.0;        // mean of posterior sds
  double bias_pct = 0.0;  // (mean - truth) / truth * 100
  double coverage = 0.0;  // share of 95% intervals covering the truth
};

struct StudyResult {
  std::vector<StudyRow> rows;
  std::vector<std::size_t> failed;  // per sample size, replicates excluded
  std::vector<std::size_t> used;    // per sample size, replicates aggregated
};

inline double relative_bias_pct(double estimate, double truth) { return (estimate - truth) / truth * 100.0; }

/// Aggregates replicate fits of one sample size into rows, one per parameter.
inline std::vector<StudyRow> aggregate_replicates(std::size_t n, const TrueModel& truth,
                                                  const std::vector<std::string>& names,
                                                  const std::vector<ReplicateFit>& fits) {
  const auto theta = truth.constrained();
  std::vector<StudyRow> rows;
  for (std::size_t j = 0; j < theta.size(); ++j) {
    StudyRow row;
    row.n = n;
    row.parameter = names[j];
    row.truth = theta[j];
    std::size_t used = 0, covered = 0;
    for (const auto& f : fits) {
      if (!f.ok) continue;
      ++used;
      row.mean += f.mean[j];
      row.sd += f.sd[j];
      covered += (f.ci_low[j] <= theta[j] && theta[j] <= f.ci_high[j]) ? 1 : 0;
    }
    if (used > 0) {
      row.mean /= static_cast<double>(used);
      row.sd /= static_cast<double>(used);
      row.coverage = static_cast<double>(covered) / static_cast<double>(used);
    }
    row.bias_pct = relative_bias_pct(row.mean, row.truth);
    rows.push_back(std::move(row));
  }
  return rows;
}

/// Simulates a dataset with at least one event (fresh substreams, at most 100
/// attempts) and fits the DGGD regression to it.
inline ReplicateFit fit_replicate(const StudyConfig& config, std::size_t n, std::size_t replicate) {
  ReplicateFit fit;
  try {
    const Rng base(config.seed, {static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(replicate)});
    GeneratedDataset gen;
    bool informative = false;
    for (std::size_t attempt = 0; attempt < 100 && !informative; ++attempt) {
      gen = generate_dataset(config.truth, n, base.substream(attempt));
      informative = gen.data.event_count() > 0;
    }
    if (!informative) throw SamplerError("no replicate with at least one event after 100 attempts");

    SamplerConfig sampler = config.sampler;
    sampler.seed = base.substream(1u << 20).next();
    sampler.parallel_chains = false;
    const CureModel model(ModelSpec{Family::dggd, config.priors}, gen.data);
    const PosteriorDraws draws = sample(model, sampler, model.parameter_names());
    for (const auto& s : summarize(draws, false)) {
      fit.mean.push_back(s.mean);
      fit.sd.push_back(s.sd);
      fit.ci_low.push_back(s.ci_low);
      fit.ci_high.push_back(s.ci_high);
    }
    fit.ok = true;
  } catch (const std::exception& e) {
    fit.error = e.what();
  }
  return fit;
}

/// Runs every (sample size, replicate) fit, in parallel across replicates, and
/// aggregates in replicate order. `progress` (optional) is called after each
/// finished fit with the number done so far.
inline StudyResult run_study(const StudyConfig& config,
                             const std::function<void(std::size_t, std::size_t)>& progress = {}) {
  config.validate();
  const std::vector<std::string> names{"beta0", "beta1", "beta2", "alpha", "psi"};
  const std::size_t per_size = config.replicates;
  const std::size_t total = config.sample_sizes.size() * per_size;
  std::vector<ReplicateFit> fits(total);

  std::atomic<std::size_t> next{0}, done{0};
  const auto worker = [&] {
    for (std::size_t job = next++; job < total; job = next++) {
      fits[job] = fit_replicate(config, config.sample_sizes[job / per_size], job % per_size);
      const std::size_t finished = ++done;
      if (progress) progress(finished, total);
    }
  };
  std::size_t threads = config.threads ? config.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, total);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  StudyResult result;
  for (std::size_t s = 0; s < config.sample_sizes.size(); ++s) {
    const std::vector<ReplicateFit> slice(fits.begin() + static_cast<std::ptrdiff_t>(s * per_size),
                                          fits.begin() + static_cast<std::ptrdiff_t>((s + 1) * per_size));
    const auto ok = static_cast<std::size_t>(std::count_if(slice.begin(), slice.end(), [](auto& f) { return f.ok; }));
    result.used.push_back(ok);
    result.failed.push_back(per_size - ok);
    for (auto& row : aggregate_replicates(config.sample_sizes[s], config.truth, names, slice))
      result.rows.push_back(std::move(row));
  }
  return result;
}

}  // namespace defcure
