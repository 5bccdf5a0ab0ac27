#include <doctest.h>

#include <cmath>
#include <map>
#include <vector>

#include "minimt/cipher.hpp"
#include "minimt/evaluation.hpp"

using namespace minimt;

namespace {

// Independent brute-force corpus BLEU-4 used as the oracle: multiset
// intersection per sentence via ordered maps, then the textbook formula.
// Deliberately shares no code with the library implementation.
double oracle_bleu(const std::vector<std::vector<int>>& hyps, const std::vector<std::vector<int>>& refs) {
  double log_precision_sum = 0.0;
  long long hyp_len = 0, ref_len = 0;
  for (std::size_t s = 0; s < hyps.size(); ++s) {
    hyp_len += static_cast<long long>(hyps[s].size());
    ref_len += static_cast<long long>(refs[s].size());
  }
  for (int n = 1; n <= 4; ++n) {
    long long match = 0, total = 0;
    for (std::size_t s = 0; s < hyps.size(); ++s) {
      std::map<std::vector<int>, long long> hyp_ngrams, ref_ngrams;
      for (std::size_t i = 0; i + n <= hyps[s].size(); ++i) {
        ++hyp_ngrams[std::vector<int>(hyps[s].begin() + i, hyps[s].begin() + i + n)];
      }
      for (std::size_t i = 0; i + n <= refs[s].size(); ++i) {
        ++ref_ngrams[std::vector<int>(refs[s].begin() + i, refs[s].begin() + i + n)];
      }
      for (const auto& [ng, count] : hyp_ngrams) {
        total += count;
        auto it = ref_ngrams.find(ng);
        if (it != ref_ngrams.end()) match += std::min(count, it->second);
      }
    }
    if (total == 0 || match == 0) return 0.0;
    log_precision_sum += std::log(static_cast<double>(match) / static_cast<double>(total));
  }
  if (hyp_len == 0) return 0.0;
  const double bp = hyp_len < ref_len ? std::exp(1.0 - static_cast<double>(ref_len) / hyp_len) : 1.0;
  return bp * std::exp(log_precision_sum / 4.0) * 100.0;
}

BpeVocab toy_vocab() {
  return bpe_train(std::vector<std::string>{"the cat sat on the mat", "a dog ran to the cat", "mat dog cat run sat on"},
                   80);
}

}  // namespace

TEST_CASE("bleu: identity corpus scores exactly 100") {
  const BpeVocab v = toy_vocab();
  const std::vector<std::string> text{"the cat sat", "a dog ran to the mat"};
  const BleuReport r = spbleu(text, text, v);
  CHECK(r.score == doctest::Approx(100.0).epsilon(1e-12));
  for (double p : r.precisions) CHECK(p == doctest::Approx(1.0));
  CHECK(r.brevity_penalty == 1.0);
}

TEST_CASE("bleu: disjoint corpora score zero") {
  const BpeVocab v = toy_vocab();
  const BleuReport r = spbleu({"cat cat cat cat"}, {"dog dog dog dog"}, v);
  CHECK(r.score == 0.0);
}

TEST_CASE("bleu: agrees with the brute-force oracle on randomized corpora") {
  Rng rng = Rng::derive(31337, {});
  for (int trial = 0; trial < 50; ++trial) {
    const int sentences = 1 + static_cast<int>(rng.next_below(8));
    std::vector<std::vector<int>> hyps, refs;
    for (int s = 0; s < sentences; ++s) {
      const int ref_n = 1 + static_cast<int>(rng.next_below(12));
      std::vector<int> ref;
      for (int i = 0; i < ref_n; ++i) ref.push_back(static_cast<int>(rng.next_below(7)));
      // Mutate the reference a little so scores are often nonzero.
      std::vector<int> hyp = ref;
      const int edits = static_cast<int>(rng.next_below(3));
      for (int e = 0; e < edits && !hyp.empty(); ++e) {
        hyp[rng.next_below(hyp.size())] = static_cast<int>(rng.next_below(7));
      }
      if (rng.next_below(4) == 0 && hyp.size() > 1) hyp.pop_back();
      hyps.push_back(std::move(hyp));
      refs.push_back(std::move(ref));
    }
    const double expected = oracle_bleu(hyps, refs);
    const BleuReport got = bleu_on_ids(hyps, refs);
    CHECK(std::abs(got.score - expected) < 1e-9);
  }
}

TEST_CASE("bleu: invariances and bounds") {
  const BpeVocab v = toy_vocab();
  const std::vector<std::string> hyps{"the cat sat on a mat", "dog ran", "a cat ran to the dog"};
  const std::vector<std::string> refs{"the cat sat on the mat", "a dog ran", "the cat ran to a dog"};
  const BleuReport r = spbleu(hyps, refs, v);
  CHECK(r.score > 0.0);
  CHECK(r.score <= 100.0);
  CHECK(r.brevity_penalty <= 1.0);

  // Permutation applied to both sides leaves the score unchanged.
  const std::vector<std::string> hyps_p{hyps[2], hyps[0], hyps[1]};
  const std::vector<std::string> refs_p{refs[2], refs[0], refs[1]};
  CHECK(spbleu(hyps_p, refs_p, v).score == doctest::Approx(r.score).epsilon(1e-12));

  // Duplicating the corpus leaves the score unchanged.
  std::vector<std::string> hyps_d(hyps), refs_d(refs);
  hyps_d.insert(hyps_d.end(), hyps.begin(), hyps.end());
  refs_d.insert(refs_d.end(), refs.begin(), refs.end());
  CHECK(spbleu(hyps_d, refs_d, v).score == doctest::Approx(r.score).epsilon(1e-12));

  CHECK_THROWS_AS(spbleu({"one"}, {"one", "two"}, v), std::invalid_argument);
  CHECK_THROWS_AS(spbleu({}, {}, v), std::invalid_argument);
}

TEST_CASE("distinct_n: closed forms") {
  // k identical copies of one sentence: distinct/total = 1/k.
  const std::vector<std::string> copies(5, "one two three four");
  CHECK(distinct_n(copies, 2) == doctest::Approx(1.0 / 5.0));
  CHECK(distinct_n({"a b c d"}, 2) == doctest::Approx(1.0));
  CHECK_THROWS_AS(distinct_n({"single"}, 2), std::invalid_argument);
  CHECK_THROWS_AS(distinct_n({}, 1), std::invalid_argument);
}

TEST_CASE("score_matrix: cipher oracle translator scores 100 everywhere") {
  CipherTaskConfig cfg;
  cfg.n_languages = 2;
  cfg.base_vocab_size = 24;
  cfg.overlap = 0.3;
  cfg.sentence_len_min = 3;
  cfg.sentence_len_max = 6;
  cfg.parallel_sizes = {{"la-lb", 30}};
  cfg.dev_size = 12;
  cfg.seed = 5;
  const CipherTask task = generate_cipher_task(cfg);
  std::vector<std::string> text;
  for (const auto& [k, c] : task.data.parallel) {
    for (const auto& p : c.pairs) {
      text.push_back(p.src);
      text.push_back(p.tgt);
    }
  }
  const BpeVocab v = bpe_train(text, 220);
  const auto m = score_matrix(task.data.dev, v, [&](const LanguageId& a, const LanguageId& b,
                                                    const std::vector<std::string>& src) {
    std::vector<std::string> out;
    for (const auto& s : src) out.push_back(task.oracle.translate(a, b, s));
    return out;
  });
  CHECK(m.entries.size() == 2);  // 2 languages -> 2 ordered pairs
  for (const auto& e : m.entries) CHECK(e.score == doctest::Approx(100.0).epsilon(1e-9));
  CHECK(m.mean == doctest::Approx(100.0).epsilon(1e-9));

  const std::string grid = matrix_grid_tsv(m);
  CHECK(grid.find("la\t") != std::string::npos);
  const std::string flat = matrix_flat_tsv(m);
  CHECK(flat.find("la\tlb\t100.00") != std::string::npos);
}

TEST_CASE("score_matrix: six languages give thirty directions") {
  DevSet dev;
  for (int i = 0; i < 6; ++i) dev.languages.push_back(cipher_language(i));
  dev.sentences.assign(6, std::vector<std::string>{"w w w"});
  const BpeVocab v = bpe_train(std::vector<std::string>{"w w"}, 16);
  const auto m = score_matrix(dev, v, [](const LanguageId&, const LanguageId&, const std::vector<std::string>& s) {
    return s;
  });
  CHECK(m.entries.size() == 30);
}
