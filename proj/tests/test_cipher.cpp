#include <doctest.h>

#include <set>

#include "minimt/cipher.hpp"
#include "minimt/text.hpp"

using namespace minimt;

namespace {

CipherTaskConfig base_config() {
  CipherTaskConfig cfg;
  cfg.n_languages = 2;
  cfg.base_vocab_size = 30;
  cfg.sentence_len_min = 3;
  cfg.sentence_len_max = 7;
  cfg.parallel_sizes["la-lb"] = 40;
  cfg.mono_sizes["lb"] = 15;
  cfg.dev_size = 10;
  cfg.seed = 2024;
  return cfg;
}

}  // namespace

TEST_CASE("cipher: overlap=1 with two languages gives identical tables") {
  CipherTaskConfig cfg = base_config();
  cfg.overlap = 1.0;
  const CipherTask task = generate_cipher_task(cfg);
  const auto& sa = task.oracle.surface_vocab(make_language("la"));
  const auto& sb = task.oracle.surface_vocab(make_language("lb"));
  CHECK(sa == sb);
  // Oracle translation is the identity, so every parallel pair is a copy.
  for (const auto& p : task.data.parallel.at("la-lb").pairs) {
    CHECK(p.src == p.tgt);
    CHECK(task.oracle.translate(p.src_lang, p.tgt_lang, p.src) == p.src);
  }
}

TEST_CASE("cipher: overlap=0 gives disjoint surface vocabularies") {
  CipherTaskConfig cfg = base_config();
  cfg.overlap = 0.0;
  const CipherTask task = generate_cipher_task(cfg);
  const auto& sa = task.oracle.surface_vocab(make_language("la"));
  const auto& sb = task.oracle.surface_vocab(make_language("lb"));
  std::set<std::string> set_a(sa.begin(), sa.end());
  for (const auto& w : sb) CHECK(set_a.count(w) == 0);
}

TEST_CASE("cipher: ground-truth invariant on every parallel pair") {
  CipherTaskConfig cfg = base_config();
  cfg.n_languages = 4;
  cfg.overlap = 0.5;
  cfg.reorder = true;
  cfg.parallel_sizes = {{"la-lb", 30}, {"lb-lc", 30}, {"lc-ld", 30}, {"la-ld", 30}};
  cfg.mono_sizes = {{"la", 10}, {"ld", 10}};
  const CipherTask task = generate_cipher_task(cfg);
  for (const auto& [key, corpus] : task.data.parallel) {
    for (const auto& p : corpus.pairs) {
      CHECK(task.oracle.translate(p.src_lang, p.tgt_lang, p.src) == p.tgt);
      CHECK(task.oracle.translate(p.tgt_lang, p.src_lang, p.tgt) == p.src);
    }
  }
  // Dev set is n-way parallel and oracle-consistent.
  REQUIRE(task.data.dev.languages.size() == 4);
  for (std::size_t i = 0; i < task.data.dev.size(); ++i) {
    const auto& ref0 = task.data.dev.sentences[0][i];
    for (std::size_t l = 1; l < 4; ++l) {
      CHECK(task.oracle.translate(task.data.dev.languages[0], task.data.dev.languages[l], ref0) ==
            task.data.dev.sentences[l][i]);
    }
  }
}

TEST_CASE("cipher: similar group excludes the first language when n >= 3") {
  CipherTaskConfig cfg = base_config();
  cfg.n_languages = 3;
  cfg.overlap = 1.0;
  cfg.parallel_sizes = {{"la-lb", 5}};
  cfg.mono_sizes.clear();
  const CipherTask task = generate_cipher_task(cfg);
  const auto& sa = task.oracle.surface_vocab(make_language("la"));
  const auto& sb = task.oracle.surface_vocab(make_language("lb"));
  const auto& sc = task.oracle.surface_vocab(make_language("lc"));
  CHECK(sb == sc);               // the similar group shares everything at overlap=1
  std::set<std::string> set_b(sb.begin(), sb.end());
  for (const auto& w : sa) CHECK(set_b.count(w) == 0);  // language 0 stays private
}

TEST_CASE("cipher: deterministic given seed") {
  CipherTaskConfig cfg = base_config();
  cfg.overlap = 0.4;
  const CipherTask t1 = generate_cipher_task(cfg);
  const CipherTask t2 = generate_cipher_task(cfg);
  CHECK(t1.data.parallel.at("la-lb").pairs.size() == t2.data.parallel.at("la-lb").pairs.size());
  for (std::size_t i = 0; i < t1.data.parallel.at("la-lb").size(); ++i) {
    CHECK(t1.data.parallel.at("la-lb").pairs[i].src == t2.data.parallel.at("la-lb").pairs[i].src);
    CHECK(t1.data.parallel.at("la-lb").pairs[i].tgt == t2.data.parallel.at("la-lb").pairs[i].tgt);
  }
  CHECK(t1.data.mono.at("lb").sentences == t2.data.mono.at("lb").sentences);
  CHECK(t1.data.dev.sentences == t2.data.dev.sentences);

  CipherTaskConfig other = cfg;
  other.seed = cfg.seed + 1;
  const CipherTask t3 = generate_cipher_task(other);
  CHECK(t1.data.dev.sentences != t3.data.dev.sentences);
}

TEST_CASE("cipher: sentence lengths respect the configured range") {
  CipherTaskConfig cfg = base_config();
  cfg.sentence_len_min = 4;
  cfg.sentence_len_max = 6;
  const CipherTask task = generate_cipher_task(cfg);
  for (const auto& s : task.data.mono.at("lb").sentences) {
    const auto n = split_words(s).size();
    CHECK(n >= 4);
    CHECK(n <= 6);
  }
}

TEST_CASE("cipher: invalid configs rejected") {
  CipherTaskConfig cfg = base_config();
  cfg.overlap = 1.5;
  CHECK_THROWS_AS(generate_cipher_task(cfg), std::invalid_argument);
  cfg = base_config();
  cfg.overlap = -0.1;
  CHECK_THROWS_AS(generate_cipher_task(cfg), std::invalid_argument);
  cfg = base_config();
  cfg.n_languages = 1;
  CHECK_THROWS_AS(generate_cipher_task(cfg), std::invalid_argument);
  cfg = base_config();
  cfg.parallel_sizes = {{"la-la", 5}};
  CHECK_THROWS_AS(generate_cipher_task(cfg), std::invalid_argument);
}
