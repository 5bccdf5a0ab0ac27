// Back-translation rounds: synthetic-pair generation from monolingual data,
// the length/ratio filter, mixing with parallel data at the configured
// parallel:synthetic cap, and one finetuning round over the result.
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "minimt/cipher.hpp"
#include "minimt/corpus.hpp"
#include "minimt/decoding.hpp"
#include "minimt/training.hpp"

namespace minimt {

struct SyntheticFilterConfig {
  int max_len = 250;       // words, exclusive
  double max_ratio = 1.8;  // max(len)/min(len), exclusive

  void validate() const {
    if (max_len < 1) throw std::invalid_argument("filter: max_len must be >= 1");
    if (!(max_ratio > 1.0)) throw std::invalid_argument("filter: max_ratio must be > 1");
  }
};

struct FilterTally {
  std::size_t accepted = 0;
  std::size_t rejected_length = 0;
  std::size_t rejected_ratio = 0;

  std::size_t total() const { return accepted + rejected_length + rejected_ratio; }
};

// Accepts a pair iff both sides are shorter than max_len words and the
// symmetric length ratio max/min is below max_ratio. Order-preserving.
std::vector<SentencePair> filter_synthetic(const std::vector<SentencePair>& pairs, const SyntheticFilterConfig& cfg,
                                           FilterTally* tally = nullptr);

bool filter_accepts(const SentencePair& pair, const SyntheticFilterConfig& cfg, bool* length_ok = nullptr);

// Builds synthetic pairs for target_direction from monolingual text in the
// direction's target language: every monolingual sentence becomes the target
// of a pair whose source is the generator's translation into the source
// language (the generator runs the reverse direction).
//   generate(sentences, into_lang, strategy, seed) -> translations
template <typename GenerateFn>
Corpus back_translate(GenerateFn&& generate, const MonoCorpus& mono, const Direction& target_direction,
                      const DecodeStrategy& strategy, int round, std::uint64_t seed) {
  if (mono.sentences.empty()) throw ConfigError("back_translate: monolingual corpus is empty");
  if (!(mono.lang == target_direction.tgt)) {
    throw ConfigError("back_translate: monolingual corpus is " + mono.lang.code + " but direction " +
                      target_direction.key() + " needs target-side " + target_direction.tgt.code);
  }
  const std::vector<std::string> sources = generate(mono.sentences, target_direction.src, strategy, seed);
  if (sources.size() != mono.sentences.size()) {
    throw ConfigError("back_translate: generator returned " + std::to_string(sources.size()) + " sentences for " +
                      std::to_string(mono.sentences.size()) + " inputs");
  }
  Corpus out;
  out.direction = target_direction;
  out.pairs.reserve(sources.size());
  for (std::size_t i = 0; i < sources.size(); ++i) {
    out.pairs.push_back(SentencePair{target_direction.src, target_direction.tgt, sources[i], mono.sentences[i],
                                     Origin::synthetic_from(strategy, round)});
  }
  return out;
}

struct BtRoundConfig {
  int round = 1;
  DecodeStrategy strategy = DecodeStrategy::top_k(10);
  std::map<std::string, std::size_t> mono_caps;  // language code -> sentences used
  SyntheticFilterConfig filter;
  int mix_ratio_parallel_to_synthetic = 5;
  double temperature = 5.0;
  std::size_t mixture_size = 0;  // 0: sum of capped source sizes
  std::uint64_t seed = 0;
  TrainConfig train;
  bool average_retained_checkpoints = true;
};

// Inputs shared across rounds. parallel_by_dir holds one corpus per training
// direction (both orders of each pair materialized by the caller).
struct BtRoundState {
  const std::map<std::string, Corpus>* parallel_by_dir = nullptr;
  const std::map<std::string, MonoCorpus>* mono = nullptr;
  const DevSet* dev = nullptr;
  const BpeVocab* vocab = nullptr;
  const ModelConfig* model_cfg = nullptr;
  const ModelParams<float>* prev_params = nullptr;       // finetuning start
  const ModelParams<float>* generator_params = nullptr;  // synthetic-data generator
  const ModelConfig* generator_cfg = nullptr;
  std::vector<Direction> eval_directions;
  StopRule stop;
  int eval_limit = 0;  // dev sentences per direction for before/after scores
  int eval_beam = 5;
  bool score_before = true;  // skip the incoming-model scores (sweep cells)
  std::string ckpt_dir;
};

struct DirectionReport {
  std::string direction;
  std::size_t generated = 0;
  std::size_t accepted = 0;
  std::size_t rejected_length = 0;
  std::size_t rejected_ratio = 0;
  std::size_t mixed = 0;  // synthetic pairs admitted to the training pool
  std::size_t parallel = 0;
};

struct BtRoundReport {
  int round = 1;
  std::string strategy;
  std::vector<DirectionReport> directions;
  std::map<std::string, double> dev_before, dev_after;  // per eval direction
  double avg_before = 0.0;
  double avg_after = 0.0;
  std::size_t mixture_size = 0;
};

struct BtRoundResult {
  std::map<std::string, Corpus> synthetic;  // filtered + capped, per direction
  ModelParams<float> model;                 // the round's trained model
  BtRoundReport report;
  TrainResult train_result;
};

BtRoundResult run_bt_round(const BtRoundConfig& cfg, const BtRoundState& state);

// Round report in the shared [section] / key = value format.
std::string render_round_report(const BtRoundReport& report);

// Swaps source and target sides (provenance preserved).
Corpus reversed(const Corpus& corpus);

}  // namespace minimt
