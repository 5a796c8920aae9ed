// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

// INI run configuration. Every key is optional; unknown sections and keys
// are rejected so typos do not silently fall back to defaults.
//
//   [data]     input, time, event, covariates (comma list), exclude (1-based rows)
//   [model]    family, families (comma list, for compare)
//   [prior]    beta_mean, beta_sd (one value or one per coefficient),
//              alpha_mean, alpha_sd, psi_shape, psi_rate,
//              lambda_shape, lambda_rate, gamma_shape, gamma_rate
//   [sampler]  chains, warmup, samples, seed, target_accept, max_tree_depth,
//              init_radius, parallel
//   [output]   dir, draws
//   [simulate] n, beta, alpha, psi
//   [study]    sizes, replicates, threads
//   [diagnose] draws, residuals (plug-in | averaged), deviance_threshold, k_threshold

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cstddef>
#include <filesystem>
#include <istream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "defcure/csv.hpp"
#include "defcure/diagnostics.hpp"
#include "defcure/model.hpp"
#include "defcure/nuts.hpp"
#include "defcure/simulator.hpp"

namespace defcure {

struct RunConfig {
  std::filesystem::path input;
  ColumnMapping columns;
  std::vector<std::size_t> exclude;  // 1-based data rows

  ModelSpec model;
  std::vector<Family> families{Family::dggd, Family::gompertz};
  SamplerConfig sampler;

  std::filesystem::path out_dir = "out";
  bool write_draws = false;

  TrueModel truth;
  std::size_t simulate_n = 500;

  std::vector<std::size_t> study_sizes{100, 300, 500, 1000};
  std::size_t study_replicates = 1000;
  std::size_t threads = 0;

  std::filesystem::path draws_input;
  ResidualMode residual_mode = ResidualMode::plug_in;
  double deviance_threshold = 3.0;
  double k_threshold = 0.7;
};

namespace detail {

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (auto t = trim(item); !t.empty()) out.emplace_back(t);
  return out;
}

inline double to_double(const std::string& key, const std::string& s) {
  const auto v = parse_double(trim(s));
  if (!v) throw ValidationError("config key '" + key + "' expects a number, got '" + s + "'");
  return *v;
}

inline std::size_t to_count(const std::string& key, const std::string& s) {
  const double v = to_double(key, s);
  if (v < 0 || v != static_cast<double>(static_cast<std::size_t>(v)))
    throw ValidationError("config key '" + key + "' expects a non-negative integer, got '" + s + "'");
  return static_cast<std::size_t>(v);
}

inline std::vector<double> to_doubles(const std::string& key, const std::string& s) {
  std::vector<double> out;
  for (const auto& item : split_list(s)) out.push_back(to_double(key, item));
  if (out.empty()) throw ValidationError("config key '" + key + "' is empty");
  return out;
}

inline bool to_bool(const std::string& key, const std::string& s) {
  const std::string t(trim(s));
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ValidationError("config key '" + key + "' expects true or false, got '" + s + "'");
}

}  // namespace detail

/// Parses 1-based row indices such as "212" or "5, 17".
inline std::vector<std::size_t> parse_exclusions(const std::string& s) {
  std::vector<std::size_t> rows;
  for (const auto& item : detail::split_list(s)) {
    const std::size_t r = detail::to_count("exclude", item);
    if (r < 1) throw ValidationError("excluded rows are numbered from 1");
    rows.push_back(r);
  }
  return rows;
}

inline RunConfig parse_config(std::istream& in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }

  static const std::map<std::string, std::set<std::string>> known{
      {"data", {"input", "time", "event", "covariates", "exclude"}},
      {"model", {"family", "families"}},
      {"prior",
       {"beta_mean", "beta_sd", "alpha_mean", "alpha_sd", "psi_shape", "psi_rate", "lambda_shape", "lambda_rate",
        "gamma_shape", "gamma_rate"}},
      {"sampler", {"chains", "warmup", "samples", "seed", "target_accept", "max_tree_depth", "init_radius", "parallel"}},
      {"output", {"dir", "draws"}},
      {"simulate", {"n", "beta", "alpha", "psi"}},
      {"study", {"sizes", "replicates", "threads"}},
      {"diagnose", {"draws", "residuals", "deviance_threshold", "k_threshold"}},
  };

  RunConfig cfg;
  for (const auto& [section, body] : tree) {
    const auto sec = known.find(section);
    if (sec == known.end()) throw ValidationError("config: unknown section [" + section + "]");
    for (const auto& [key, node] : body) {
      if (!sec->second.contains(key)) throw ValidationError("config: unknown key '" + key + "' in [" + section + "]");
      const std::string v = node.data();
      const std::string name = section + "." + key;
      auto& pr = cfg.model.priors;
      auto& sm = cfg.sampler;
      if (section == "data") {
        if (key == "input") cfg.input = std::string(detail::trim(v));
        else if (key == "time") cfg.columns.time = std::string(detail::trim(v));
        else if (key == "event") cfg.columns.event = std::string(detail::trim(v));
        else if (key == "covariates") cfg.columns.covariates = detail::split_list(v);
        else cfg.exclude = parse_exclusions(v);
      } else if (section == "model") {
        if (key == "family") {
          cfg.model.family = parse_family(detail::trim(v));
        } else {
          cfg.families.clear();
          for (const auto& f : detail::split_list(v)) cfg.families.push_back(parse_family(f));
        }
      } else if (section == "prior") {
        if (key == "beta_mean") pr.beta_means = detail::to_doubles(name, v);
        else if (key == "beta_sd") pr.beta_sds = detail::to_doubles(name, v);
        else if (key == "alpha_mean") pr.alpha_mean = detail::to_double(name, v);
        else if (key == "alpha_sd") pr.alpha_sd = detail::to_double(name, v);
        else if (key == "psi_shape") pr.psi_shape = detail::to_double(name, v);
        else if (key == "psi_rate") pr.psi_rate = detail::to_double(name, v);
        else if (key == "lambda_shape") pr.lambda_shape = detail::to_double(name, v);
        else if (key == "lambda_rate") pr.lambda_rate = detail::to_double(name, v);
        else if (key == "gamma_shape") pr.gamma_shape = detail::to_double(name, v);
        else pr.gamma_rate = detail::to_double(name, v);
      } else if (section == "sampler") {
        if (key == "chains") sm.chains = detail::to_count(name, v);
        else if (key == "warmup") sm.warmup_iters = detail::to_count(name, v);
        else if (key == "samples") sm.sampling_iters = detail::to_count(name, v);
        else if (key == "seed") sm.seed = detail::to_count(name, v);
        else if (key == "target_accept") sm.target_accept = detail::to_double(name, v);
        else if (key == "max_tree_depth") sm.max_tree_depth = static_cast<int>(detail::to_count(name, v));
        else if (key == "init_radius") sm.init_radius = detail::to_double(name, v);
        else sm.parallel_chains = detail::to_bool(name, v);
      } else if (section == "output") {
        if (key == "dir") cfg.out_dir = std::string(detail::trim(v));
        else cfg.write_draws = detail::to_bool(name, v);
      } else if (section == "simulate") {
        if (key == "n") cfg.simulate_n = detail::to_count(name, v);
        else if (key == "beta") cfg.truth.beta = detail::to_doubles(name, v);
        else if (key == "alpha") cfg.truth.alpha = detail::to_double(name, v);
        else cfg.truth.psi = detail::to_double(name, v);
      } else if (section == "study") {
        if (key == "sizes") {
          cfg.study_sizes.clear();
          for (double s : detail::to_doubles(name, v)) cfg.study_sizes.push_back(detail::to_count(name, format_number(s)));
        } else if (key == "replicates") {
          cfg.study_replicates = detail::to_count(name, v);
        } else {
          cfg.threads = detail::to_count(name, v);
        }
      } else {
        if (key == "draws") {
          cfg.draws_input = std::string(detail::trim(v));
        } else if (key == "residuals") {
          const std::string mode(detail::trim(v));
          if (mode == "plug-in") cfg.residual_mode = ResidualMode::plug_in;
          else if (mode == "averaged") cfg.residual_mode = ResidualMode::averaged;
          else throw ValidationError("config: residuals must be plug-in or averaged");
        } else if (key == "deviance_threshold") {
          cfg.deviance_threshold = detail::to_double(name, v);
        } else {
          cfg.k_threshold = detail::to_double(name, v);
        }
      }
    }
  }
  return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config " + path.string());
  return parse_config(in);
}

}  // namespace defcure
