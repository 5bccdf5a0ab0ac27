// Declarative experiment configs and the staged pipeline behind the CLI:
// prepare, train-bpe, vocabulary comparison, baseline training, BT rounds,
// the strategy/volume sweep and the score matrix.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "minimt/backtranslation.hpp"
#include "minimt/cipher.hpp"
#include "minimt/config.hpp"
#include "minimt/corpus.hpp"
#include "minimt/decoding.hpp"
#include "minimt/training.hpp"

namespace minimt {

struct RoundBlock {
  int round = 1;
  DecodeStrategy strategy = DecodeStrategy::top_k(10);
  std::map<std::string, std::size_t> mono_caps;
  SyntheticFilterConfig filter;
  int mix_ratio = 5;
  std::size_t mixture_size = 0;
  std::uint64_t seed = 0;
  std::string generator = "previous";  // previous | baseline | path:<checkpoint>
  int max_steps = 0;                   // 0: inherit [train]
  int validate_every = 0;              // 0: inherit [train]
};

struct SweepBlock {
  bool enabled = false;
  std::vector<DecodeStrategy> strategies;
  std::vector<std::size_t> volumes;  // mono cap values for the pivot language
  std::string pivot;
  std::map<std::string, std::size_t> base_caps;  // caps for the other languages
  int max_steps = 150;
  int validate_every = 0;  // 0: same as max_steps (validate once at the end)
  std::uint64_t seed = 0;
};

struct ExperimentConfig {
  // [task]
  bool task_is_cipher = true;
  std::string task_manifest;
  CipherTaskConfig cipher;

  // [tokenizer]
  int vocab_size = 1000;
  std::vector<int> compare_sizes;
  int compare_steps = 120;

  // [model]
  std::string model_preset = "small";  // empty when explicit dims are given
  ModelConfig model;                   // vocab_size filled after BPE training
  std::uint64_t model_init_seed = 7;

  // [train]
  TrainConfig train;

  // [eval]
  int eval_beam = 5;
  int eval_dev_limit = 0;                 // 0 = full dev
  int stage_dev_limit = 64;               // per-direction cap for round before/after scores
  std::vector<Direction> eval_directions; // empty = all ordered pairs
  StopRule stop;

  // [bt.N]
  std::vector<RoundBlock> rounds;

  // [sweep]
  SweepBlock sweep;

  std::uint64_t seed = 0;  // global seed; CLI --seed overrides
  std::string config_text;
};

// Parses and validates; errors carry the config file line numbers.
ExperimentConfig parse_experiment(const IniFile& ini);

struct RunOptions {
  std::string config_path;
  std::string out_dir;  // empty: runs/<config-hash>-<timestamp>
  std::optional<std::uint64_t> seed_override;
  bool dry_run = false;
  bool resume = false;
};

// Executes one subcommand (prepare, train-bpe, train, translate,
// backtranslate, evaluate, average-ckpt, pipeline). Throws ConfigError for
// configuration problems and TrainError/std exceptions for runtime failures.
void run_subcommand(const std::string& name, const RunOptions& options);

const char* tool_version();

}  // namespace minimt
