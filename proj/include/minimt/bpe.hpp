// Shared multilingual byte-pair-encoding vocabulary: training, encoding,
// decoding and the on-disk vocabulary format.
#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "minimt/corpus.hpp"

namespace minimt {

// Subword vocabulary. Ids are laid out as: core specials (pad, bos, eos,
// unk), language tags, the initial character alphabet (sorted), then one
// token per merge in rank order. Word-final symbols carry a trailing "</w>"
// marker that separates them from word-internal symbols.
struct BpeVocab {
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;

  std::vector<std::string> specials;  // __pad__, __bos__, __eos__, __unk__, then tags
  std::vector<std::string> alphabet;  // sorted initial symbols
  std::vector<std::pair<std::string, std::string>> merges;  // rank order

  std::vector<std::string> id_to_token;
  std::unordered_map<std::string, int> token_to_id;
  std::unordered_map<std::string, int> merge_rank;  // "left\x1fright" -> rank
  int target_size = 0;

  int size() const { return static_cast<int>(id_to_token.size()); }
  // Pad/bos/eos/unk and language tags; these ids never come out of merges.
  bool is_special(int id) const { return id >= 0 && id < static_cast<int>(specials.size()); }
  bool is_core_special(int id) const { return id >= 0 && id <= kUnk; }
  // Id of a language tag token; throws std::invalid_argument if absent.
  int tag_id(const LanguageId& lang) const;
};

// Greedy highest-frequency pair merging until target_size tokens exist or no
// pair occurs at least twice. Ties break lexicographically on (left, right).
// Reserved tags become atomic special tokens and never join merge statistics.
BpeVocab bpe_train(const std::vector<std::string>& sentences, int target_size,
                   const std::vector<std::string>& reserved_tags = {});
BpeVocab bpe_train(const std::vector<const std::vector<std::string>*>& corpora, int target_size,
                   const std::vector<std::string>& reserved_tags = {});

// Total function: unknown symbols map to unk; words equal to a special or
// tag token pass through atomically as that single id.
std::vector<int> bpe_encode(const BpeVocab& vocab, const std::string& sentence);

// Inverse of encode over known symbols. Core specials (pad/bos/eos/unk) are
// stripped; language tags are emitted as text so callers can strip them.
// Out-of-range ids raise std::invalid_argument naming the id.
std::string bpe_decode(const BpeVocab& vocab, const std::vector<int>& ids);

// Line-oriented vocabulary file; save -> load -> save is byte-identical.
std::string serialize_vocab(const BpeVocab& vocab);
void save_vocab(const std::string& path, const BpeVocab& vocab);
BpeVocab load_vocab(const std::string& path);

// FNV-1a of the serialized vocabulary (equals the fingerprint of the file).
std::uint64_t vocab_fingerprint(const BpeVocab& vocab);

}  // namespace minimt
