#include <doctest.h>

#include <algorithm>

#include "minimt/bpe.hpp"
#include "minimt/text.hpp"
#include "test_helpers.hpp"

using namespace minimt;

TEST_CASE("bpe_train: first merge on `aa aa aa` joins the word") {
  // Hand trace: the only word is "aa" (freq 3) with symbols [a, a</w>];
  // its single adjacent pair is (a, a</w>).
  const auto v = bpe_train(std::vector<std::string>{"aa aa aa"}, 64);
  REQUIRE(!v.merges.empty());
  CHECK(v.merges[0].first == "a");
  CHECK(v.merges[0].second == "a</w>");
  const auto ids = bpe_encode(v, "aa");
  REQUIRE(ids.size() == 1);
  CHECK(v.id_to_token[ids[0]] == "aa</w>");
}

TEST_CASE("bpe_train: lexicographic tie-break") {
  // "ab" and "cd" both occur twice; pairs (a,b</w>) and (c,d</w>) tie at 2.
  const auto v = bpe_train(std::vector<std::string>{"ab cd", "cd ab"}, 64);
  REQUIRE(v.merges.size() >= 2);
  CHECK(v.merges[0] == std::make_pair(std::string("a"), std::string("b</w>")));
  CHECK(v.merges[1] == std::make_pair(std::string("c"), std::string("d</w>")));
}

TEST_CASE("bpe_train: target equal to specials + alphabet means zero merges") {
  const std::vector<std::string> corpus{"ab ba ab"};
  // Alphabet: a, b, a</w>, b</w>; specials: 4 core.
  const auto v = bpe_train(corpus, 8);
  CHECK(v.merges.empty());
  CHECK(v.size() == 8);
  const auto ids = bpe_encode(v, "ab");
  CHECK(ids.size() == 2);  // character-level

  CHECK_THROWS_AS(bpe_train(corpus, 7), std::invalid_argument);
  CHECK_THROWS_AS(bpe_train(std::vector<std::string>{"", "  "}, 100), std::invalid_argument);
}

TEST_CASE("bpe_train: corpus order does not matter") {
  const std::vector<std::string> a{"river bank", "river boat", "deep river"};
  const std::vector<std::string> b{"money bank", "bank vault"};
  std::vector<std::string> ab(a), ba(b);
  ab.insert(ab.end(), b.begin(), b.end());
  ba.insert(ba.end(), a.begin(), a.end());
  const auto va = bpe_train(ab, 60);
  const auto vb = bpe_train(ba, 60);
  CHECK(serialize_vocab(va) == serialize_vocab(vb));
}

TEST_CASE("bpe_train: merges stop when no pair repeats") {
  const auto v = bpe_train(std::vector<std::string>{"abc def"}, 500);
  CHECK(v.size() < 500);  // every word unique once; no pair reaches frequency 2
  CHECK(v.merges.empty());
}

TEST_CASE("bpe: specials occupy the lowest ids and tags stay atomic") {
  const auto v = bpe_train(std::vector<std::string>{"xy xy zw zw"}, 40, {"__id__", "__jv__"});
  CHECK(v.id_to_token[BpeVocab::kPad] == "__pad__");
  CHECK(v.id_to_token[BpeVocab::kBos] == "__bos__");
  CHECK(v.id_to_token[BpeVocab::kEos] == "__eos__");
  CHECK(v.id_to_token[BpeVocab::kUnk] == "__unk__");
  CHECK(v.id_to_token[4] == "__id__");
  CHECK(v.id_to_token[5] == "__jv__");
  CHECK(v.tag_id(make_language("id")) == 4);
  CHECK_THROWS_AS(v.tag_id(make_language("xx")), std::invalid_argument);

  const auto ids = bpe_encode(v, "__id__ xy");
  REQUIRE(ids.size() >= 2);
  CHECK(ids[0] == 4);  // exactly one token for the tag
  // The tag is emitted as text on decode; callers strip it.
  CHECK(bpe_decode(v, ids) == "__id__ xy");
}

TEST_CASE("bpe_encode: empty, unknown and total behavior") {
  const auto v = bpe_train(std::vector<std::string>{"abc abc"}, 40);
  CHECK(bpe_encode(v, "").empty());
  CHECK(bpe_encode(v, "   ").empty());
  const auto ids = bpe_encode(v, "aQc");  // Q was never seen
  CHECK(std::count(ids.begin(), ids.end(), BpeVocab::kUnk) >= 1);
}

TEST_CASE("bpe_decode: strips core specials, rejects bad ids") {
  const auto v = bpe_train(std::vector<std::string>{"hi hi"}, 40);
  CHECK(bpe_decode(v, {BpeVocab::kBos, BpeVocab::kEos, BpeVocab::kPad, BpeVocab::kUnk}) == "");
  CHECK_THROWS_WITH_AS(bpe_decode(v, {v.size()}), doctest::Contains(std::to_string(v.size())),
                       std::invalid_argument);
  CHECK_THROWS_AS(bpe_decode(v, {-1}), std::invalid_argument);
}

TEST_CASE("bpe: roundtrip over trained symbols") {
  // Random sentences over a closed word set; decode(encode(s)) == s.
  const std::vector<std::string> words{"alpha", "beta", "gamma", "delta", "ep", "zetas", "x"};
  std::vector<std::string> corpus;
  Rng rng = Rng::derive(17, {});
  for (int i = 0; i < 200; ++i) {
    std::string s;
    const int n = 1 + static_cast<int>(rng.next_below(7));
    for (int k = 0; k < n; ++k) {
      if (k) s += " ";
      s += words[rng.next_below(words.size())];
    }
    corpus.push_back(s);
  }
  const auto v = bpe_train(corpus, 120);
  for (int i = 0; i < 50; ++i) {
    const std::string& s = corpus[rng.next_below(corpus.size())];
    CHECK(bpe_decode(v, bpe_encode(v, s)) == s);
  }
  // Canonical form: extra whitespace collapses before encoding.
  CHECK(bpe_decode(v, bpe_encode(v, "  alpha   beta ")) == "alpha beta");
}

TEST_CASE("bpe: larger vocabulary never lengthens encodings") {
  std::vector<std::string> corpus;
  Rng rng = Rng::derive(23, {});
  const std::vector<std::string> words{"stone", "stones", "stony", "river", "rivers", "raft"};
  for (int i = 0; i < 150; ++i) {
    std::string s;
    for (int k = 0; k < 4; ++k) {
      if (k) s += " ";
      s += words[rng.next_below(words.size())];
    }
    corpus.push_back(s);
  }
  const auto small = bpe_train(corpus, 30);
  const auto large = bpe_train(corpus, 60);
  for (int i = 0; i < 30; ++i) {
    const std::string& s = corpus[rng.next_below(corpus.size())];
    CHECK(bpe_encode(large, s).size() <= bpe_encode(small, s).size());
  }
}

TEST_CASE("bpe: vocabulary file reloads bit-exactly") {
  testing::TempDir tmp("vocab");
  const auto v = bpe_train(std::vector<std::string>{"foo bar baz foo bar", "foo foo"}, 48, {"__la__"});
  save_vocab(tmp.path("v.txt"), v);
  const auto loaded = load_vocab(tmp.path("v.txt"));
  CHECK(serialize_vocab(loaded) == serialize_vocab(v));
  save_vocab(tmp.path("v2.txt"), loaded);
  CHECK(fingerprint_file(tmp.path("v.txt")) == fingerprint_file(tmp.path("v2.txt")));
  CHECK(vocab_fingerprint(loaded) == vocab_fingerprint(v));
  CHECK(vocab_fingerprint(v) == fingerprint_file(tmp.path("v.txt")));

  // Same encodings after reload.
  CHECK(bpe_encode(loaded, "foo bar baz") == bpe_encode(v, "foo bar baz"));

  CHECK_THROWS_AS(load_vocab(tmp.path("missing.txt")), ConfigError);
  write_lines(tmp.path("bad.txt"), {"#version 2"});
  CHECK_THROWS_AS(load_vocab(tmp.path("bad.txt")), ConfigError);
}

TEST_CASE("bpe: determinism across repeated training") {
  const std::vector<std::string> corpus{"pack my box", "with five dozen", "liquor jugs", "pack my jugs"};
  CHECK(serialize_vocab(bpe_train(corpus, 70)) == serialize_vocab(bpe_train(corpus, 70)));
}
