// CLI driver: subcommands over one shared config format.
#include <CLI11.hpp>
#include <exception>
#include <iostream>

#include "minimt/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"minimt: desk-scale multilingual MT back-translation experiments"};
  app.set_version_flag("--version", minimt::tool_version());
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::int64_t seed = -1;
  bool seed_set = false;
  bool dry_run = false;
  bool resume = false;

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"prepare", "generate or import the task corpora"},
      {"train-bpe", "train the shared subword vocabulary"},
      {"train", "baseline training on parallel data"},
      {"translate", "translate a text file with a checkpoint ([translate] block)"},
      {"backtranslate", "run the configured back-translation rounds"},
      {"evaluate", "score all ordered language pairs on the dev set"},
      {"average-ckpt", "average checkpoints ([average] block)"},
      {"pipeline", "run every configured stage in order"},
  };
  for (const auto& [name, desc] : commands) {
    CLI::App* sub = app.add_subcommand(name, desc);
    sub->add_option("--config", config_path, "experiment config file")->required();
    sub->add_option("--seed", seed, "override the global seed")->each([&](const std::string&) { seed_set = true; });
    sub->add_option("--out", out_dir, "run directory (default: runs/<config-hash>-<timestamp>)");
    sub->add_flag("--dry-run", dry_run, "validate the config without side effects");
    sub->add_flag("--resume", resume, "skip stages already marked done in the run directory");
  }

  CLI11_PARSE(app, argc, argv);

  minimt::RunOptions options;
  options.config_path = config_path;
  options.out_dir = out_dir;
  options.dry_run = dry_run;
  options.resume = resume;
  if (seed_set) options.seed_override = static_cast<std::uint64_t>(seed);

  try {
    minimt::run_subcommand(app.get_subcommands().front()->get_name(), options);
  } catch (const minimt::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
