#include "mixem/commands.hpp"
#include "mixem/config.hpp"
#include "mixem/log.hpp"
#include "mixem/parallel.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Noise-level estimation by EM with exact and learned posterior samplers"};
  app.set_version_flag("--version", std::string(mixem::kVersion));
  app.require_subcommand(1);

  mixem::CommandOptions options;
  std::uint64_t seed = 0;
  std::string out;
  std::string backend;
  bool verbose = false;
  std::vector<CLI::Option*> seed_flags;
  std::vector<CLI::Option*> out_flags;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", options.config_path, "Experiment configuration file")->required();
    seed_flags.push_back(sub->add_option("--seed", seed, "Override data.seed"));
    sub->add_option("--threads", options.threads, "Worker threads (0 = hardware concurrency)");
    sub->add_option("--override", options.overrides, "section.key=value, repeatable");
    out_flags.push_back(sub->add_option("--out", out, "Output directory (default run.output_dir)"));
    sub->add_flag("--verbose", verbose, "Debug logging");
  };

  auto* run_em = app.add_subcommand("run-em", "Run EM from theta0 and write trace.csv and run.json");
  add_common(run_em);
  run_em->add_flag("--timing", options.timing, "Record wall-clock milliseconds per round");

  auto* theory = app.add_subcommand("theory", "Fisher information, local constants and contraction runs");
  add_common(theory);

  auto* fisher = app.add_subcommand("fisher", "Fisher information at theta*");
  add_common(fisher);

  auto* sample = app.add_subcommand("sample", "Posterior draws for one observation at theta*");
  add_common(sample);
  sample->add_option("--observation", options.observation, "Observation index");
  sample->add_option("--count", options.count, "Number of draws");
  auto* backend_flag = sample->add_option("--backend", backend, "conjugate, grid, metropolis or flow");

  auto* train = app.add_subcommand("train-flow", "Train a flow sampler at theta* and save flow.ckpt");
  add_common(train);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : mixem::kExitConfig;
  }

  if (verbose) mixem::log::set_level(mixem::log::Level::debug);
  for (auto* opt : seed_flags) {
    if (opt->count()) options.seed = seed;
  }
  for (auto* opt : out_flags) {
    if (opt->count()) options.out_dir = out;
  }
  if (backend_flag->count()) options.backend = backend;
  mixem::set_default_threads(options.threads);

  if (run_em->parsed()) return mixem::cmd_run_em(options);
  if (theory->parsed()) return mixem::cmd_theory(options);
  if (fisher->parsed()) return mixem::cmd_fisher(options);
  if (sample->parsed()) return mixem::cmd_sample(options);
  return mixem::cmd_train_flow(options);
}
