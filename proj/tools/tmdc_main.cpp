#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "tmdc/harness/config.hpp"
#include "tmdc/harness/experiment.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitStage = 2;

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string output_dir;
  bool quiet = false;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config_path, "Experiment config (JSON); built-in defaults when omitted");
  cmd->add_option("--seed", opts.seed, "Override the experiment seed");
  cmd->add_option("--output-dir", opts.output_dir, "Override the run directory");
  cmd->add_flag("--quiet", opts.quiet, "Suppress progress output");
}

tmdc::ExperimentConfig resolve(const CommonOptions& opts) {
  tmdc::ExperimentConfig c = opts.config_path.empty() ? tmdc::default_config() : tmdc::load_config(opts.config_path);
  if (opts.seed) c.seed = *opts.seed;
  if (!opts.output_dir.empty()) c.output_dir = opts.output_dir;
  c.validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Diffusion classifier robustness experiments on synthetic data"};
  app.require_subcommand(1);

  CommonOptions opts;
  const std::vector<std::pair<std::string, std::string>> stage_commands = {
      {"gen-data", "gen"},
      {"train-diffusion", "train_diffusion"},
      {"train-baseline", "train_baseline"},
      {"adv-train-baseline", "adv_train_baseline"},
      {"gen-attack", "attack"},
      {"eval", "eval"},
      {"tm-finetune", "tm"},
      {"select-ckpt", "select"},
      {"report", "report"},
  };
  std::string selected_stage;
  for (const auto& [name, stage] : stage_commands) {
    CLI::App* cmd = app.add_subcommand(name, "Run the " + stage + " stage");
    add_common(cmd, opts);
    cmd->callback([&selected_stage, stage = stage] { selected_stage = stage; });
  }

  CLI::App* run = app.add_subcommand("run", "Run every configured stage in order");
  add_common(run, opts);
  std::string recipe;
  run->add_option("--recipe", recipe, "Canned stage selection: table1, table2, autoattack, ablations");

  CLI::App* show = app.add_subcommand("print-config", "Print the resolved config as JSON");
  add_common(show, opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  tmdc::ExperimentConfig config;
  try {
    config = resolve(opts);
    if (run->parsed() && !recipe.empty()) config = tmdc::apply_recipe(config, recipe);
  } catch (const tmdc::Error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }

  if (show->parsed()) {
    std::cout << tmdc::config_to_json(config);
    return kExitOk;
  }

  tmdc::LogFn log;
  if (!opts.quiet) log = [](std::string_view msg) { std::cerr << msg << "\n"; };
  try {
    if (run->parsed()) {
      tmdc::run_experiment(config, log);
    } else {
      tmdc::run_stage(config, selected_stage, log);
    }
  } catch (const tmdc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return kExitStage;
  }
  std::cerr << "run directory: " << config.output_dir.string() << "\n";
  return kExitOk;
}
