// Synthetic cipher-language task: every language is a bijective token
// substitution of a shared latent sentence (plus an optional deterministic
// local reordering), so the reference translation between any two languages
// is exactly known. Used as the desk-scale verification bed.
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "minimt/corpus.hpp"

namespace minimt {

struct CipherTaskConfig {
  int n_languages = 2;
  int base_vocab_size = 60;
  double overlap = 0.0;  // fraction of surface vocabulary shared inside the similar group
  int sentence_len_min = 3;
  int sentence_len_max = 9;
  std::map<std::string, std::size_t> parallel_sizes;  // direction key -> pair count
  std::map<std::string, std::size_t> mono_sizes;      // language code -> sentence count
  std::size_t dev_size = 500;
  bool reorder = false;  // odd-index languages swap adjacent word pairs
  std::uint64_t seed = 0;
};

// Ground-truth translator between any two task languages.
class CipherOracle {
 public:
  CipherOracle() = default;
  CipherOracle(std::vector<LanguageId> languages, std::vector<std::vector<std::string>> surface,
               std::vector<bool> reorder);

  std::string translate(const LanguageId& from, const LanguageId& to, const std::string& sentence) const;

  const std::vector<std::string>& surface_vocab(const LanguageId& lang) const;

 private:
  int index_of(const LanguageId& lang) const;

  std::vector<LanguageId> languages_;
  std::vector<std::vector<std::string>> surface_;          // [lang][latent id] -> word
  std::vector<std::map<std::string, int>> inverse_;        // [lang] word -> latent id
  std::vector<bool> reorder_;
};

struct CipherTask {
  TaskData data;
  CipherOracle oracle;
};

// Deterministic in cfg.seed: byte-identical corpora across runs.
// Languages are named la, lb, lc, ... With three or more languages the first
// language keeps a fully private surface vocabulary and languages 1..n-1 form
// the similar group; with exactly two languages the pair is the similar group.
CipherTask generate_cipher_task(const CipherTaskConfig& cfg);

// Language code for index i: la, lb, ..., lz, laa, ...
LanguageId cipher_language(int index);

}  // namespace minimt
