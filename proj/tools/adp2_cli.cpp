#include <cstdint>
#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "adp2/commands.hpp"
#include "adp2/errors.hpp"

int main(int argc, char** argv) {
  CLI::App app{"deterministic simulator for asynchronous decentralized SGD with "
               "differential privacy accounting"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  std::string mu_text;
  std::string out_dir;
  std::string trace_a, trace_b;
  int runs = 4;

  CLI::App* cal = app.add_subcommand(
      "calibrate", "derive sigma2 for an (eps, delta) budget and print feasibility");
  CLI::App* run = app.add_subcommand("run", "simulate one experiment, write trace and report");
  CLI::App* cmp = app.add_subcommand("compare", "compare two trace files");
  CLI::App* swp = app.add_subcommand("sweep", "run consecutive seeds in parallel");

  for (CLI::App* sub : {cal, run, swp}) {
    sub->add_option("--config", config_path, "experiment config file (JSON)")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--mu", mu_text, "averaging weight: \"auto\" or a value in (0, 1)");
    sub->add_option("--output", out_dir, "directory prepended to output paths");
  }
  swp->add_option("--runs", runs, "number of consecutive seeds")->check(CLI::PositiveNumber);
  cmp->add_option("a", trace_a, "first trace file")->required();
  cmp->add_option("b", trace_b, "second trace file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmp->parsed()) return adp2::cmd_compare(trace_a, trace_b);

    CLI::App* active = cal->parsed() ? cal : (run->parsed() ? run : swp);
    adp2::CliOverrides overrides;
    if (active->count("--seed") > 0) overrides.seed = seed;
    if (active->count("--mu") > 0) overrides.mu = mu_text;
    if (active->count("--output") > 0) overrides.output = out_dir;
    const adp2::ExperimentConfig c = adp2::load_config(config_path, overrides);

    if (cal->parsed()) return adp2::cmd_calibrate(c);
    if (run->parsed()) return adp2::cmd_run(c);
    return adp2::cmd_sweep(c, runs);
  } catch (const adp2::ConfigError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 2;
  } catch (const adp2::InfeasibleError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 3;
  } catch (const adp2::RegimeError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
