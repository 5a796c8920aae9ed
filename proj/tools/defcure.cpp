// Apache License, Version 2.0, refer to LICENSE.txt

// Command-line front end. Exit codes: 0 success, 1 invalid input or
// configuration, 2 sampler failure.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "defcure/pipeline.hpp"

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> exclude;
  std::optional<std::size_t> chains, warmup, samples;
  std::optional<std::string> input, family, families, draws;
  bool dump_draws = false;
};

void add_common(CLI::App* sub, Overrides& o) {
  sub->add_option("--config", o.config, "INI configuration file");
  sub->add_option("--seed", o.seed, "random seed");
  sub->add_option("--out", o.out, "output directory");
  sub->add_option("--exclude", o.exclude, "1-based rows to drop, e.g. 212,5");
  sub->add_option("--chains", o.chains, "number of chains");
  sub->add_option("--warmup", o.warmup, "warm-up iterations per chain");
  sub->add_option("--samples", o.samples, "retained draws per chain");
  sub->add_option("--input", o.input, "input CSV (overrides [data] input)");
}

defcure::RunConfig resolve(const Overrides& o) {
  defcure::RunConfig cfg = o.config.empty() ? defcure::RunConfig{} : defcure::load_config(o.config);
  if (o.seed) cfg.sampler.seed = *o.seed;
  if (o.out) cfg.out_dir = *o.out;
  if (o.exclude) cfg.exclude = defcure::parse_exclusions(*o.exclude);
  if (o.chains) cfg.sampler.chains = *o.chains;
  if (o.warmup) cfg.sampler.warmup_iters = *o.warmup;
  if (o.samples) cfg.sampler.sampling_iters = *o.samples;
  if (o.input) cfg.input = *o.input;
  if (o.family) cfg.model.family = defcure::parse_family(*o.family);
  if (o.families) {
    cfg.families.clear();
    for (const auto& f : defcure::detail::split_list(*o.families)) cfg.families.push_back(defcure::parse_family(f));
  }
  if (o.draws) cfg.draws_input = *o.draws;
  if (o.dump_draws) cfg.write_draws = true;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian cure-fraction survival regression"};
  app.require_subcommand(1);
  Overrides o;

  auto* fit = app.add_subcommand("fit", "fit one model and write the posterior summary");
  add_common(fit, o);
  fit->add_option("--family", o.family, "dggd, gompertz or weibull-mixture");
  fit->add_flag("--dump-draws", o.dump_draws, "also write draws.csv");

  auto* simulate = app.add_subcommand("simulate", "generate a dataset from the true model");
  add_common(simulate, o);

  auto* study = app.add_subcommand("mc-study", "repeated simulate-and-fit study of bias and coverage");
  add_common(study, o);

  auto* diag = app.add_subcommand("diagnose", "residuals, CPO, PSIS-LOO and flagged observations");
  add_common(diag, o);
  diag->add_option("--family", o.family, "dggd, gompertz or weibull-mixture");
  diag->add_option("--draws", o.draws, "draws.csv from a previous fit (otherwise refit)");

  auto* compare = app.add_subcommand("compare", "DIC, PSIS-LOO and -2 LPML across models");
  add_common(compare, o);
  compare->add_option("--families", o.families, "comma list, e.g. dggd,gompertz");

  auto* km = app.add_subcommand("km", "Kaplan-Meier curve with Greenwood bounds");
  add_common(km, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const defcure::RunConfig cfg = resolve(o);
    auto& log = std::cerr;
    if (fit->parsed()) defcure::run_fit(cfg, log);
    else if (simulate->parsed()) defcure::run_simulate(cfg, log);
    else if (study->parsed()) defcure::run_mc_study(cfg, log);
    else if (diag->parsed()) defcure::run_diagnose(cfg, log);
    else if (compare->parsed()) defcure::run_compare(cfg, log);
    else defcure::run_km(cfg, log);
  } catch (const defcure::SamplerError& e) {
    std::cerr << "sampler failure: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
