// Corpus data structures, temperature-based balancing, language tagging and
// corpus file I/O.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "minimt/common.hpp"

namespace minimt {

struct LanguageId {
  std::string code;  // non-empty, ASCII lowercase letters

  // Reserved token "__<code>__"; never produced or split by BPE merges.
  std::string tag_token() const { return "__" + code + "__"; }

  bool operator==(const LanguageId& o) const { return code == o.code; }
  bool operator!=(const LanguageId& o) const { return code != o.code; }
  bool operator<(const LanguageId& o) const { return code < o.code; }
};

// Throws std::invalid_argument if the code is empty or not lowercase ASCII letters.
LanguageId make_language(const std::string& code);

// Decoder used to produce a synthetic source sentence.
enum class StrategyKind { Beam, TopK, Unconstrained };

struct DecodeStrategy {
  StrategyKind kind = StrategyKind::Beam;
  int param = 5;  // beam size or k; unused for Unconstrained

  static DecodeStrategy beam(int size) { return {StrategyKind::Beam, size}; }
  static DecodeStrategy top_k(int k) { return {StrategyKind::TopK, k}; }
  static DecodeStrategy unconstrained() { return {StrategyKind::Unconstrained, 0}; }

  std::string label() const;                         // "beam:5", "topk:10", "unconstrained"
  static DecodeStrategy parse(const std::string&);   // inverse of label()
  bool operator==(const DecodeStrategy& o) const { return kind == o.kind && param == o.param; }
};

struct Origin {
  bool synthetic = false;
  DecodeStrategy strategy;  // meaningful only when synthetic
  int round = 0;            // BT round that generated the pair, >= 1 when synthetic

  static Origin parallel() { return Origin{}; }
  static Origin synthetic_from(DecodeStrategy s, int round) { return Origin{true, s, round}; }
};

struct SentencePair {
  LanguageId src_lang;
  LanguageId tgt_lang;
  std::string src;
  std::string tgt;
  Origin origin;
};

// Ordered source->target direction, e.g. la->lb.
struct Direction {
  LanguageId src;
  LanguageId tgt;

  std::string key() const { return src.code + "-" + tgt.code; }
  Direction reversed() const { return {tgt, src}; }
  bool operator==(const Direction& o) const { return src == o.src && tgt == o.tgt; }
  bool operator<(const Direction& o) const { return key() < o.key(); }
};

// "la-lb" -> Direction; throws std::invalid_argument on malformed keys.
Direction parse_direction(const std::string& key);

struct Corpus {
  Direction direction;
  std::vector<SentencePair> pairs;

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }
};

struct MonoCorpus {
  LanguageId lang;
  std::vector<std::string> sentences;
};

// One source feeding a training mixture. Several sources may share a
// direction (parallel data plus capped synthetic data).
struct MixtureSource {
  Direction direction;
  const Corpus* corpus = nullptr;
  std::optional<std::size_t> cap;  // applied before weighting

  std::size_t effective_size() const;
};

struct MixtureSpec {
  std::vector<MixtureSource> sources;
  double temperature = 5.0;
  std::size_t total_size = 0;
  std::uint64_t seed = 0;
};

// Normalized sampling probabilities p_i proportional to (D_i / sum_j D_j)^(1/T).
// Keys with zero counts, an empty mapping or T <= 0 raise std::invalid_argument
// naming the offending entry.
std::map<std::string, double> temperature_weights(const std::map<std::string, std::size_t>& counts, double T);

// Draws spec.total_size pairs: direction by temperature weight over capped
// source sizes, then a pair uniformly (with replacement) from that
// direction's pooled sources. Deterministic given spec.seed.
std::vector<SentencePair> sample_mixture(const MixtureSpec& spec);

// Prefixes tgt with the target-language tag token. Throws
// std::invalid_argument when the target already carries the tag.
SentencePair tag_target(const SentencePair& pair);

bool is_tagged(const std::string& tgt, const LanguageId& tgt_lang);

// ---------------------------------------------------------------------------
// Corpus files: UTF-8, one sentence per line, LF endings. A parallel
// direction a-b is the file pair `<stem>.<a>` / `<stem>.<b>` with aligned
// line numbers (stem `<name>.a-b`); monolingual data is a single file.

Corpus load_parallel(const std::string& stem, const Direction& dir, Origin origin = Origin::parallel());
void save_parallel(const std::string& stem, const Corpus& corpus);

MonoCorpus load_mono(const std::string& path, const LanguageId& lang);
void save_mono(const std::string& path, const MonoCorpus& mono);

// N-way parallel held-out set: sentences[i][j] is sentence j in languages[i].
struct DevSet {
  std::vector<LanguageId> languages;
  std::vector<std::vector<std::string>> sentences;

  std::size_t size() const { return sentences.empty() ? 0 : sentences.front().size(); }
  int lang_index(const LanguageId& lang) const;
};

// Everything a training run consumes: parallel and monolingual corpora plus
// the n-way parallel dev set, with optional per-direction caps.
struct TaskData {
  std::vector<LanguageId> languages;
  std::map<std::string, Corpus> parallel;     // keyed by direction key as stored
  std::map<std::string, MonoCorpus> mono;     // keyed by language code
  std::map<std::string, std::size_t> caps;    // optional per-direction caps
  DevSet dev;

  const Corpus* find_parallel(const Direction& dir) const;  // nullptr if absent
};

// Writes corpus files plus `corpus.manifest` into dir; loads them back.
// The manifest lists corpora, line counts and caps; counts are validated on
// load.
void save_task_data(const std::string& dir, const TaskData& task);
TaskData load_task_data(const std::string& manifest_path);

}  // namespace minimt
