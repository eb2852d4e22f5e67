#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mixem {

/// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;

struct CommandOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 0;
  std::vector<std::string> overrides;
  std::optional<std::string> out_dir;
  /// run-em: write measured wall times instead of zeros.
  bool timing = false;
  /// sample: observation index, draw count and backend override.
  long observation = 0;
  long count = 1000;
  std::optional<std::string> backend;
};

/// Simulates observations at θ*, runs EM, writes trace.csv and run.json.
int cmd_run_em(const CommandOptions& options);
/// Fisher information, ball-grid estimates, step-size interval and
/// contraction runs; writes theory.json, ball.csv and fisher.csv.
int cmd_theory(const CommandOptions& options);
/// The Fisher block of cmd_theory alone; writes fisher.json and fisher.csv.
int cmd_fisher(const CommandOptions& options);
/// Posterior draws for one observation; writes samples.csv and summary.json.
int cmd_sample(const CommandOptions& options);
/// Trains a flow sampler at θ* and writes flow.ckpt.
int cmd_train_flow(const CommandOptions& options);

}  // namespace mixem
