#include "minimt/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "minimt/text.hpp"

namespace minimt {

namespace {

// Packs an n-gram of ids into a byte string for hashing.
std::string pack_ngram(const std::vector<int>& ids, std::size_t start, int n) {
  std::string key(static_cast<std::size_t>(n) * sizeof(int), '\0');
  std::memcpy(key.data(), ids.data() + start, static_cast<std::size_t>(n) * sizeof(int));
  return key;
}

std::string format_score(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return std::string(buf);
}

}  // namespace

BleuReport bleu_on_ids(const std::vector<std::vector<int>>& hyps, const std::vector<std::vector<int>>& refs) {
  if (hyps.size() != refs.size()) {
    throw std::invalid_argument("bleu: hypothesis count " + std::to_string(hyps.size()) +
                                " != reference count " + std::to_string(refs.size()));
  }
  if (hyps.empty()) throw std::invalid_argument("bleu: empty corpus");

  BleuReport rep;
  std::array<std::size_t, 4> match{}, total{};
  for (std::size_t s = 0; s < hyps.size(); ++s) {
    const auto& h = hyps[s];
    const auto& r = refs[s];
    rep.hyp_tokens += h.size();
    rep.ref_tokens += r.size();
    for (int n = 1; n <= 4; ++n) {
      if (h.size() < static_cast<std::size_t>(n)) continue;
      const std::size_t h_ngrams = h.size() - n + 1;
      total[n - 1] += h_ngrams;
      if (r.size() < static_cast<std::size_t>(n)) continue;
      std::unordered_map<std::string, std::size_t> ref_counts;
      for (std::size_t i = 0; i + n <= r.size(); ++i) ++ref_counts[pack_ngram(r, i, n)];
      // Clipped matches: each reference n-gram credits at most its count.
      for (std::size_t i = 0; i + n <= h.size(); ++i) {
        auto it = ref_counts.find(pack_ngram(h, i, n));
        if (it != ref_counts.end() && it->second > 0) {
          --it->second;
          ++match[n - 1];
        }
      }
    }
  }

  bool any_zero = false;
  double log_sum = 0.0;
  for (int n = 0; n < 4; ++n) {
    rep.precisions[n] = total[n] == 0 ? 0.0 : static_cast<double>(match[n]) / static_cast<double>(total[n]);
    if (rep.precisions[n] <= 0.0) {
      any_zero = true;
    } else {
      log_sum += std::log(rep.precisions[n]);
    }
  }
  if (rep.hyp_tokens == 0) {
    rep.brevity_penalty = 0.0;
  } else if (rep.hyp_tokens < rep.ref_tokens) {
    rep.brevity_penalty = std::exp(1.0 - static_cast<double>(rep.ref_tokens) / static_cast<double>(rep.hyp_tokens));
  } else {
    rep.brevity_penalty = 1.0;
  }
  rep.score = any_zero ? 0.0 : rep.brevity_penalty * std::exp(log_sum / 4.0) * 100.0;
  return rep;
}

BleuReport spbleu(const std::vector<std::string>& hyps, const std::vector<std::string>& refs, const BpeVocab& vocab) {
  if (hyps.size() != refs.size()) {
    throw std::invalid_argument("spbleu: hypothesis count " + std::to_string(hyps.size()) +
                                " != reference count " + std::to_string(refs.size()));
  }
  std::vector<std::vector<int>> h, r;
  h.reserve(hyps.size());
  r.reserve(refs.size());
  for (const auto& s : hyps) h.push_back(bpe_encode(vocab, s));
  for (const auto& s : refs) r.push_back(bpe_encode(vocab, s));
  return bleu_on_ids(h, r);
}

double distinct_n(const std::vector<std::string>& sentences, int n) {
  if (n < 1) throw std::invalid_argument("distinct_n: order must be >= 1");
  std::unordered_set<std::string> distinct;
  std::size_t total = 0;
  for (const auto& s : sentences) {
    const auto words = split_words(s);
    if (words.size() < static_cast<std::size_t>(n)) continue;
    for (std::size_t i = 0; i + n <= words.size(); ++i) {
      std::string key;
      for (int k = 0; k < n; ++k) {
        key += words[i + k];
        key.push_back('\x1f');
      }
      distinct.insert(std::move(key));
      ++total;
    }
  }
  if (total == 0) {
    throw std::invalid_argument("distinct_n: corpus has no n-grams of order " + std::to_string(n));
  }
  return static_cast<double>(distinct.size()) / static_cast<double>(total);
}

std::string matrix_grid_tsv(const ScoreMatrix& m) {
  std::string out = "src\\tgt";
  for (const auto& l : m.languages) out += "\t" + l.code;
  out += "\n";
  for (const auto& src : m.languages) {
    out += src.code;
    for (const auto& tgt : m.languages) {
      out += "\t";
      if (src == tgt) continue;
      for (const auto& e : m.entries) {
        if (e.direction.src == src && e.direction.tgt == tgt) {
          out += format_score(e.score);
          break;
        }
      }
    }
    out += "\n";
  }
  return out;
}

std::string matrix_flat_tsv(const ScoreMatrix& m) {
  std::string out = "src\ttgt\tspbleu\n";
  for (const auto& e : m.entries) {
    out += e.direction.src.code + "\t" + e.direction.tgt.code + "\t" + format_score(e.score) + "\n";
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "avg\t-\t%.2f\n", m.mean);
  out += buf;
  return out;
}

}  // namespace minimt
