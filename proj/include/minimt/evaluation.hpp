// BLEU over the shared subword segmentation ("spBLEU-internal"), diversity
// diagnostics, and per-language-pair score matrices.
#pragma once

#include <array>
#include <string>
#include <vector>

#include "minimt/bpe.hpp"
#include "minimt/corpus.hpp"

namespace minimt {

struct BleuReport {
  double score = 0.0;  // [0, 100]
  std::array<double, 4> precisions{};
  double brevity_penalty = 1.0;
  std::size_t hyp_tokens = 0;
  std::size_t ref_tokens = 0;
};

// Corpus-level BLEU-4 over the vocabulary's subword segmentation of both
// sides. No smoothing: a zero precision at any order gives score 0. Brevity
// penalty exp(1 - ref/hyp) when the hypothesis side is shorter.
// Throws std::invalid_argument when hyps and refs differ in count or are empty.
BleuReport spbleu(const std::vector<std::string>& hyps, const std::vector<std::string>& refs, const BpeVocab& vocab);

// Same metric over pre-segmented id sequences.
BleuReport bleu_on_ids(const std::vector<std::vector<int>>& hyps, const std::vector<std::vector<int>>& refs);

// Distinct n-grams / total n-grams over whitespace tokens, in (0, 1].
// Throws std::invalid_argument when the corpus has no n-grams of order n.
double distinct_n(const std::vector<std::string>& sentences, int n);

struct MatrixEntry {
  Direction direction;
  double score = 0.0;
};

struct ScoreMatrix {
  std::vector<LanguageId> languages;
  std::vector<MatrixEntry> entries;  // n*(n-1), row-major by (src, tgt)
  double mean = 0.0;
};

// Translates and scores every ordered language pair of the dev set.
// translate(src_lang, tgt_lang, sentences) must return one hypothesis per
// input sentence.
template <typename TranslateFn>
ScoreMatrix score_matrix(const DevSet& dev, const BpeVocab& vocab, TranslateFn&& translate) {
  ScoreMatrix m;
  m.languages = dev.languages;
  double sum = 0.0;
  for (std::size_t a = 0; a < dev.languages.size(); ++a) {
    for (std::size_t b = 0; b < dev.languages.size(); ++b) {
      if (a == b) continue;
      const auto hyps = translate(dev.languages[a], dev.languages[b], dev.sentences[a]);
      const auto report = spbleu(hyps, dev.sentences[b], vocab);
      m.entries.push_back(MatrixEntry{Direction{dev.languages[a], dev.languages[b]}, report.score});
      sum += report.score;
    }
  }
  m.mean = m.entries.empty() ? 0.0 : sum / static_cast<double>(m.entries.size());
  return m;
}

// Tab-separated grid (sources as rows, targets as columns, empty diagonal).
std::string matrix_grid_tsv(const ScoreMatrix& m);
// Flat `src<TAB>tgt<TAB>score` listing.
std::string matrix_flat_tsv(const ScoreMatrix& m);

}  // namespace minimt
