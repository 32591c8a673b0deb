#include <string>

#include "CLI11.hpp"
#include "pag/cli/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Adversarial-training toolkit: train model families, sweep robustness, "
               "run zero-shot transfer, render gradient/attack figures, and score "
               "weakly supervised localization."};
  app.require_subcommand(1);

  pag::cli::CliOptions options;
  std::string command;
  const std::pair<const char*, const char*> commands[] = {
      {"train", "Train a model family from a config and save checkpoints + logs"},
      {"eval-robustness", "Sweep saved models over attack budgets into a table"},
      {"zero-shot", "Evaluate saved models on a foreign domain without fine-tuning"},
      {"visualize", "Emit input-gradient grids and high-budget attack galleries"},
      {"wsol", "Score CAM-based localization against ground-truth boxes"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", options.config_path, "Experiment config file")
        ->required();
    sub->add_option("--out", options.out_override, "Output directory (overrides [output] dir)");
    auto* seed = sub->add_option("--seed", options.seed, "Seed override");
    sub->add_flag("--deterministic", options.deterministic,
                  "Name outputs by config digest instead of timestamp");
    sub->callback([&, name = std::string(name), seed] {
      command = name;
      options.has_seed = seed->count() > 0;
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : pag::cli::kExitConfigError;
  }
  return pag::cli::run_command(command, options);
}
