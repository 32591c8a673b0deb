#pragma once

#include <cstdint>
#include <string>

#include "pag/cli/config.hpp"

namespace pag::cli {

// Exit codes shared by every command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitRuntimeError = 3;
inline constexpr int kExitPartial = 4;

struct CliOptions {
  std::string config_path;
  std::string out_override;   // overrides [output] dir when non-empty
  bool has_seed = false;
  uint64_t seed = 0;          // overrides [experiment] seed when has_seed
  bool deterministic = false; // digest-based file stamps instead of timestamps
};

// Each command loads and validates its config, runs the experiment, and
// writes its artifacts under <out>/{checkpoints,tables,figures,logs}. The
// return value is the process exit code; configuration problems throw before
// any output is written and the launcher maps them to kExitConfigError.
int cmd_train(const CliOptions& options);
int cmd_eval_robustness(const CliOptions& options);
int cmd_zero_shot(const CliOptions& options);
int cmd_visualize(const CliOptions& options);
int cmd_wsol(const CliOptions& options);

// Launcher used by the binary: dispatches on command name and converts
// exceptions to exit codes (config errors 2, everything else 3).
int run_command(const std::string& command, const CliOptions& options);

}  // namespace pag::cli
