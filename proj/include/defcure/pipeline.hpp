// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

// The work behind each CLI subcommand. Every function writes its files into
// RunConfig::out_dir; outputs depend only on the configuration and seed.
//
//   fit       summary.csv, fit.json, draws.csv (when requested)
//   simulate  simulated.csv, simulation.json
//   mc-study  study.csv, study.json
//   diagnose  residuals.csv, pointwise.csv, flags.csv, diagnostics.json
//   compare   comparison.csv, comparison.json
//   km        km.csv

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "defcure/config.hpp"
#include "defcure/csv.hpp"
#include "defcure/diagnostics.hpp"
#include "defcure/kaplan_meier.hpp"
#include "defcure/model.hpp"
#include "defcure/nuts.hpp"
#include "defcure/posterior.hpp"
#include "defcure/simulator.hpp"

namespace defcure {

using Json = nlohmann::ordered_json;

/// Dataset after exclusions, with the 1-based input row of every retained
/// observation.
struct InputData {
  SurvivalDataset data;
  std::vector<std::size_t> rows;
};

inline InputData load_input(const RunConfig& cfg, std::ostream& log) {
  if (cfg.input.empty()) throw ValidationError("no input file given (set [data] input)");
  const SurvivalDataset full = load_dataset(cfg.input, cfg.columns);
  std::vector<std::size_t> drop;
  for (std::size_t r : cfg.exclude) {
    if (r < 1 || r > full.size())
      throw ValidationError("excluded row " + std::to_string(r) + " is out of range 1.." + std::to_string(full.size()));
    drop.push_back(r - 1);
  }
  std::sort(drop.begin(), drop.end());
  drop.erase(std::unique(drop.begin(), drop.end()), drop.end());

  InputData in;
  in.data = full.without(drop);
  for (std::size_t i = 0; i < full.size(); ++i)
    if (!std::binary_search(drop.begin(), drop.end(), i)) in.rows.push_back(i + 1);
  log << "loaded " << full.size() << " rows (" << full.event_count() << " events) from " << cfg.input.string();
  if (!drop.empty()) log << ", " << drop.size() << " excluded";
  log << '\n';
  return in;
}

inline void write_json(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

inline std::filesystem::path prepare_out_dir(const RunConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir);
  return cfg.out_dir;
}

inline Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

// ---- draws dump ----

inline void write_draws(const std::filesystem::path& path, const PosteriorDraws& draws) {
  std::vector<std::string> header{"chain", "iteration"};
  for (const auto& n : draws.parameter_names()) header.push_back(n);
  header.insert(header.end(), {"log_density", "divergent"});
  CsvWriter csv(path, header);
  for (std::size_t c = 0; c < draws.chains(); ++c) {
    const auto& ch = draws.chain(c).draws;
    for (std::size_t it = 0; it < ch.size(); ++it) {
      std::vector<std::string> row{std::to_string(c + 1), std::to_string(it + 1)};
      for (double v : ch[it].constrained) row.push_back(format_number(v, 17));
      row.push_back(format_number(ch[it].log_density, 17));
      row.push_back(ch[it].divergent ? "1" : "0");
      csv.row(row);
    }
  }
}

/// Reads a draws dump back for `model`; columns must match its parameters.
inline PosteriorDraws read_draws(const std::filesystem::path& path, const CureModel& model) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open draws file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(path.string() + ": empty draws file");
  const auto header = detail::split_fields(line);
  const auto names = model.parameter_names();
  if (header.size() != names.size() + 4 || header[0] != "chain" ||
      !std::equal(names.begin(), names.end(), header.begin() + 2))
    throw ValidationError(path.string() + ": columns do not match the " + to_string(model.family()) + " model");

  std::vector<ChainResult> chains;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    ++row;
    const auto f = detail::split_fields(line);
    std::vector<double> v;
    for (const auto& cell : f) {
      const auto x = detail::parse_double(cell);
      if (!x) throw ValidationError(path.string() + ": row " + std::to_string(row) + " is not numeric");
      v.push_back(*x);
    }
    if (v.size() != header.size()) throw ValidationError(path.string() + ": row " + std::to_string(row) + " is short");
    const auto chain = static_cast<std::size_t>(v[0]);
    if (chain < 1) throw ValidationError(path.string() + ": chains are numbered from 1");
    if (chains.size() < chain) chains.resize(chain);
    DrawRecord d;
    d.constrained.assign(v.begin() + 2, v.begin() + 2 + static_cast<std::ptrdiff_t>(names.size()));
    d.unconstrained = model.unconstrain(d.constrained);
    d.log_density = v[v.size() - 2];
    d.divergent = v.back() != 0.0;
    chains[chain - 1].draws.push_back(std::move(d));
  }
  if (chains.empty()) throw ValidationError(path.string() + ": no draws");
  for (const auto& c : chains)
    if (c.draws.size() != chains[0].draws.size()) throw ValidationError(path.string() + ": chains differ in length");
  return PosteriorDraws(names, std::move(chains));
}

// ---- fit ----

inline PosteriorDraws fit_model(const CureModel& model, const SamplerConfig& sampler, std::ostream& log) {
  log << "sampling " << to_string(model.family()) << ": " << sampler.chains << " chains, " << sampler.warmup_iters
      << " warm-up + " << sampler.sampling_iters << " draws\n";
  PosteriorDraws draws = sample(model, sampler, model.parameter_names());
  if (draws.divergences() > 0) log << "warning: " << draws.divergences() << " divergent transitions\n";
  return draws;
}

inline void write_summary(const std::filesystem::path& path, const PosteriorDraws& draws) {
  CsvWriter csv(path, {"parameter", "mean", "sd", "ci_low", "ci_high", "ess", "rhat"});
  for (const auto& s : summarize(draws))
    csv.row({s.name, format_number(s.mean), format_number(s.sd), format_number(s.ci_low), format_number(s.ci_high),
             format_number(s.ess, 6), format_number(s.rhat, 6)});
}

inline Json sampler_json(const SamplerConfig& s) {
  return Json{{"chains", s.chains},
              {"warmup", s.warmup_iters},
              {"samples", s.sampling_iters},
              {"seed", s.seed},
              {"target_accept", s.target_accept},
              {"max_tree_depth", s.max_tree_depth}};
}

inline void run_fit(const RunConfig& cfg, std::ostream& log) {
  const InputData in = load_input(cfg, log);
  const CureModel model(cfg.model, in.data);
  const PosteriorDraws draws = fit_model(model, cfg.sampler, log);
  const auto dir = prepare_out_dir(cfg);
  write_summary(dir / "summary.csv", draws);
  if (cfg.write_draws) write_draws(dir / "draws.csv", draws);

  Json steps = Json::array();
  for (std::size_t c = 0; c < draws.chains(); ++c) steps.push_back(draws.chain(c).step_size);
  write_json(dir / "fit.json", Json{{"family", to_string(model.family())},
                                    {"observations", in.data.size()},
                                    {"events", in.data.event_count()},
                                    {"excluded", cfg.exclude},
                                    {"sampler", sampler_json(cfg.sampler)},
                                    {"divergences", draws.divergences()},
                                    {"mean_accept_stat", draws.mean_accept_stat()},
                                    {"step_sizes", steps}});
}

// ---- simulate ----

inline void run_simulate(const RunConfig& cfg, std::ostream& log) {
  const GeneratedDataset gen = generate_dataset(cfg.truth, cfg.simulate_n, Rng(cfg.sampler.seed));
  const auto dir = prepare_out_dir(cfg);
  std::ofstream out(dir / "simulated.csv");
  if (!out) throw ValidationError("cannot write " + (dir / "simulated.csv").string());
  write_dataset(out, gen.data);
  const auto susceptible = std::count(gen.susceptible.begin(), gen.susceptible.end(), 1);
  write_json(dir / "simulation.json", Json{{"n", cfg.simulate_n},
                                           {"seed", cfg.sampler.seed},
                                           {"beta", cfg.truth.beta},
                                           {"alpha", cfg.truth.alpha},
                                           {"psi", cfg.truth.psi},
                                           {"events", gen.data.event_count()},
                                           {"susceptible", susceptible},
                                           {"attempts", gen.attempts},
                                           {"all_cured", gen.all_cured}});
  log << "simulated " << cfg.simulate_n << " subjects (" << gen.data.event_count() << " events)\n";
}

// ---- mc-study ----

inline StudyConfig study_config(const RunConfig& cfg) {
  StudyConfig sc;
  sc.sample_sizes = cfg.study_sizes;
  sc.replicates = cfg.study_replicates;
  sc.sampler = cfg.sampler;
  sc.truth = cfg.truth;
  sc.priors = cfg.model.priors;
  sc.seed = cfg.sampler.seed;
  sc.threads = cfg.threads;
  return sc;
}

inline void run_mc_study(const RunConfig& cfg, std::ostream& log) {
  const StudyConfig sc = study_config(cfg);
  std::size_t last_pct = 0;
  const StudyResult res = run_study(sc, [&](std::size_t done, std::size_t total) {
    const std::size_t pct = done * 10 / total;
    if (pct > last_pct) {
      last_pct = pct;
      log << "mc-study: " << done << "/" << total << " fits\n";
    }
  });
  const auto dir = prepare_out_dir(cfg);
  CsvWriter csv(dir / "study.csv", {"n", "parameter", "true", "mean", "sd", "bias_pct", "coverage"});
  Json rows = Json::array();
  for (const auto& r : res.rows) {
    csv.row({std::to_string(r.n), r.parameter, format_number(r.truth), format_number(r.mean), format_number(r.sd),
             format_number(r.bias_pct, 6), format_number(r.coverage, 6)});
    rows.push_back(Json{{"n", r.n},
                        {"parameter", r.parameter},
                        {"true", r.truth},
                        {"mean", number_or_null(r.mean)},
                        {"sd", number_or_null(r.sd)},
                        {"bias_pct", number_or_null(r.bias_pct)},
                        {"coverage", number_or_null(r.coverage)}});
  }
  write_json(dir / "study.json", Json{{"sizes", sc.sample_sizes},
                                      {"replicates", sc.replicates},
                                      {"used", res.used},
                                      {"failed", res.failed},
                                      {"sampler", sampler_json(sc.sampler)},
                                      {"rows", rows}});
}

// ---- diagnose ----

inline std::string flag_label(double r_d, double k_hat, const RunConfig& cfg) {
  const bool outlier = std::abs(r_d) > cfg.deviance_threshold;
  const bool influential = k_hat > cfg.k_threshold;
  if (outlier && influential) return "outlier+influential";
  if (outlier) return "outlier";
  if (influential) return "influential";
  return "";
}

inline Json tier_counts(const PsisResult& loo) {
  return Json{{"ok", loo.count(ParetoTier::ok)},
              {"fair", loo.count(ParetoTier::fair)},
              {"bad", loo.count(ParetoTier::bad)},
              {"very_bad", loo.count(ParetoTier::very_bad)},
              {"not_applicable", loo.count(ParetoTier::not_applicable)}};
}

inline void run_diagnose(const RunConfig& cfg, std::ostream& log) {
  const InputData in = load_input(cfg, log);
  const CureModel model(cfg.model, in.data);
  const PosteriorDraws draws =
      cfg.draws_input.empty() ? fit_model(model, cfg.sampler, log) : read_draws(cfg.draws_input, model);
  const DiagnosticsReport rep = diagnose(model, draws, cfg.residual_mode);
  const auto dir = prepare_out_dir(cfg);
  const auto& data = in.data;

  CsvWriter res(dir / "residuals.csv", {"index", "time", "event", "r_M", "r_D"});
  CsvWriter pw(dir / "pointwise.csv", {"index", "log_cpo", "k_hat", "tier"});
  CsvWriter fl(dir / "flags.csv", {"index", "time", "event", "r_D", "k_hat", "flag"});
  std::size_t flagged = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::string idx = std::to_string(in.rows[i]);
    const double r_d = rep.residuals.deviance[i];
    const double k = rep.loo.k_hat[i];
    res.row({idx, format_number(data.time(i)), std::to_string(data.event(i)),
             format_number(rep.residuals.martingale[i]), format_number(r_d)});
    pw.row({idx, format_number(rep.cpo.log_cpo[i]), format_number(k, 6), to_string(rep.loo.tier[i])});
    if (const auto label = flag_label(r_d, k, cfg); !label.empty()) {
      ++flagged;
      fl.row({idx, format_number(data.time(i)), std::to_string(data.event(i)), format_number(r_d),
              format_number(k, 6), label});
    }
  }
  write_json(dir / "diagnostics.json",
             Json{{"family", to_string(model.family())},
                  {"observations", data.size()},
                  {"residuals", cfg.residual_mode == ResidualMode::plug_in ? "plug-in" : "averaged"},
                  {"lpml", rep.lpml},
                  {"neg2_lpml", -2.0 * rep.lpml},
                  {"dic", rep.dic.dic_half},
                  {"dic_standard", rep.dic.dic_standard},
                  {"dic_note", "dic = mean deviance + p_D/2; dic_standard = mean deviance + p_D"},
                  {"p_d", rep.dic.p_d},
                  {"mean_deviance", rep.dic.mean_deviance},
                  {"elpd_loo", rep.loo.elpd},
                  {"psis_loo", rep.loo.looic()},
                  {"k_hat_tiers", tier_counts(rep.loo)},
                  {"flagged", flagged}});
  log << flagged << " observations flagged\n";
}

// ---- compare ----

struct ComparisonRow {
  Family family;
  DiagnosticsReport report;
};

inline std::vector<ComparisonRow> compare_models(const RunConfig& cfg, const SurvivalDataset& data,
                                                 std::ostream& log) {
  if (cfg.families.size() < 2) throw ValidationError("compare requires at least two models");
  std::vector<ComparisonRow> rows;
  for (Family f : cfg.families) {
    const CureModel model(ModelSpec{f, cfg.model.priors}, data);
    const PosteriorDraws draws = fit_model(model, cfg.sampler, log);
    rows.push_back({f, diagnose(model, draws)});
  }
  return rows;
}

inline void run_compare(const RunConfig& cfg, std::ostream& log) {
  if (cfg.families.size() < 2) throw ValidationError("compare requires at least two models");
  const InputData in = load_input(cfg, log);
  const auto rows = compare_models(cfg, in.data, log);

  const auto best = [&](auto metric) {
    double m = kInf;
    for (const auto& r : rows) m = std::min(m, metric(r.report));
    return m;
  };
  const auto dic_of = [](const DiagnosticsReport& r) { return r.dic.dic_half; };
  const auto loo_of = [](const DiagnosticsReport& r) { return r.loo.looic(); };
  const auto lpml_of = [](const DiagnosticsReport& r) { return -2.0 * r.lpml; };
  const double best_dic = best(dic_of), best_loo = best(loo_of), best_lpml = best(lpml_of);

  const auto dir = prepare_out_dir(cfg);
  CsvWriter csv(dir / "comparison.csv",
                {"model", "dic", "dic_standard", "p_d", "psis_loo", "neg2_lpml", "best_dic", "best_psis_loo",
                 "best_neg2_lpml", "k_ok", "k_fair", "k_bad", "k_very_bad", "k_na"});
  Json models = Json::array();
  for (const auto& r : rows) {
    const auto& rep = r.report;
    const auto mark = [](double v, double b) { return std::string(v == b ? "1" : "0"); };
    csv.row({to_string(r.family), format_number(dic_of(rep)), format_number(rep.dic.dic_standard),
             format_number(rep.dic.p_d), format_number(loo_of(rep)), format_number(lpml_of(rep)),
             mark(dic_of(rep), best_dic), mark(loo_of(rep), best_loo), mark(lpml_of(rep), best_lpml),
             std::to_string(rep.loo.count(ParetoTier::ok)), std::to_string(rep.loo.count(ParetoTier::fair)),
             std::to_string(rep.loo.count(ParetoTier::bad)), std::to_string(rep.loo.count(ParetoTier::very_bad)),
             std::to_string(rep.loo.count(ParetoTier::not_applicable))});
    models.push_back(Json{{"model", to_string(r.family)},
                          {"dic", dic_of(rep)},
                          {"dic_standard", rep.dic.dic_standard},
                          {"p_d", rep.dic.p_d},
                          {"psis_loo", loo_of(rep)},
                          {"neg2_lpml", lpml_of(rep)},
                          {"k_hat_tiers", tier_counts(rep.loo)}});
  }
  write_json(dir / "comparison.json",
             Json{{"observations", in.data.size()},
                  {"sampler", sampler_json(cfg.sampler)},
                  {"dic_note", "dic = mean deviance + p_D/2; dic_standard = mean deviance + p_D"},
                  {"models", models}});
}

// ---- km ----

inline void run_km(const RunConfig& cfg, std::ostream& log) {
  const InputData in = load_input(cfg, log);
  const KmCurve km = kaplan_meier(in.data);
  const auto dir = prepare_out_dir(cfg);
  CsvWriter csv(dir / "km.csv", {"time", "n_risk", "n_event", "survival", "std_err", "lower", "upper"});
  for (std::size_t k = 0; k < km.time.size(); ++k)
    csv.row({format_number(km.time[k]), std::to_string(km.at_risk[k]), std::to_string(km.events[k]),
             format_number(km.survival[k]), format_number(km.std_err[k]), format_number(km.lower[k]),
             format_number(km.upper[k])});
}

}  // namespace defcure
