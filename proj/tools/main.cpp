#include <iostream>

#include <CLI11.hpp>

#include "cohortcal/errors.hpp"
#include "commands.hpp"

namespace {

enum Exit { ok = 0, validation = 2, nonconvergence = 3, io = 4 };

}  // namespace

int main(int argc, char** argv) {
  using namespace cohortcal;
  CLI::App app{"Cohort smoking-history model calibration"};
  app.require_subcommand(1);
  cli::RunOptions opt;
  std::uint64_t seed = 0;
  int workers = 0;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "calibration config (JSON)")->required();
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--workers", workers, "worker threads for the chains");
    sub->add_option("--out", opt.out, "output directory");
    sub->add_option("--data", opt.data, "directory holding survey.csv, mortality.csv and hr_prior.csv");
  };
  auto* simulate = app.add_subcommand("simulate", "draw a synthetic survey from the config's truth");
  auto* calibrate = app.add_subcommand("calibrate", "MAP, adaptive MCMC and culled posterior draws");
  auto* profile = app.add_subcommand("profile", "profile posteriors and identifiability classes");
  auto* overlap = app.add_subcommand("overlap", "prior/posterior overlap for proper priors");
  auto* dic = app.add_subcommand("dic", "DIC table over calibrated models");
  auto* summarize = app.add_subcommand("summarize", "initiation, quit and switch tables and predictive checks");
  for (auto* s : {simulate, calibrate, profile, overlap, dic, summarize}) common(s);
  profile->add_option("--map", opt.map, "calibrate output with map_<sex>.json");
  overlap->add_option("--posterior", opt.posterior, "calibrate output")->required();
  summarize->add_option("--posterior", opt.posterior, "calibrate output")->required();
  dic->add_option("--run", opt.runs, "calibrate output, repeatable")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return Exit::validation;
  }
  for (auto* s : app.get_subcommands()) {
    if (s->count("--seed")) opt.seed = seed;
    if (s->count("--workers")) opt.workers = workers;
  }

  try {
    if (*simulate) cli::cmd_simulate(opt);
    else if (*calibrate) cli::cmd_calibrate(opt);
    else if (*profile) cli::cmd_profile(opt);
    else if (*overlap) cli::cmd_overlap(opt);
    else if (*dic) cli::cmd_dic(opt);
    else if (*summarize) cli::cmd_summarize(opt);
  } catch (const NonConvergenceError& e) {
    std::cerr << "error: " << e.what() << "\n" << e.details();
    return Exit::nonconvergence;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return Exit::io;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return Exit::io;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return Exit::validation;
  } catch (const SolveError& e) {
    std::cerr << "error: model could not be solved: " << e.what() << "\n";
    return Exit::validation;
  }
  return Exit::ok;
}
