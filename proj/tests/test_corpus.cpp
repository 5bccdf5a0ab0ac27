#include <doctest.h>

#include <cmath>
#include <map>

#include "minimt/corpus.hpp"
#include "minimt/text.hpp"
#include "test_helpers.hpp"

using namespace minimt;

namespace {

Corpus make_corpus(const std::string& dir_key, std::size_t n, const std::string& stem = "s") {
  const Direction dir = parse_direction(dir_key);
  Corpus c;
  c.direction = dir;
  for (std::size_t i = 0; i < n; ++i) {
    c.pairs.push_back(SentencePair{dir.src, dir.tgt, stem + std::to_string(i), stem + "t" + std::to_string(i),
                                   Origin::parallel()});
  }
  return c;
}

}  // namespace

TEST_CASE("temperature_weights: T=1 recovers raw proportions") {
  const auto w = temperature_weights({{"a", 100}, {"b", 1}}, 1.0);
  CHECK(w.at("a") == doctest::Approx(100.0 / 101.0).epsilon(1e-12));
  CHECK(w.at("b") == doctest::Approx(1.0 / 101.0).epsilon(1e-12));
}

TEST_CASE("temperature_weights: huge temperature flattens to uniform") {
  const auto w = temperature_weights({{"a", 100}, {"b", 1}}, 1e9);
  CHECK(std::abs(w.at("a") - 0.5) < 1e-6);
  CHECK(std::abs(w.at("b") - 0.5) < 1e-6);
}

TEST_CASE("temperature_weights: golden values for the extreme corpus sizes at T=5") {
  // Counts are the largest and smallest parallel rows of the task data
  // table; expectations computed with 60-digit arithmetic and frozen.
  const auto w = temperature_weights({{"en-id", 54'100'000}, {"jv-ta", 66'000}}, 5.0);
  CHECK(w.at("en-id") == doctest::Approx(0.7927836502308179).epsilon(1e-12));
  CHECK(w.at("jv-ta") == doctest::Approx(0.2072163497691820).epsilon(1e-12));
}

TEST_CASE("temperature_weights: golden values for {10000,1000,100}") {
  const auto w5 = temperature_weights({{"a", 10'000}, {"b", 1'000}, {"c", 100}}, 5.0);
  CHECK(w5.at("a") == doctest::Approx(0.49283795196792747).epsilon(1e-12));
  CHECK(w5.at("b") == doctest::Approx(0.31095972543274055).epsilon(1e-12));
  CHECK(w5.at("c") == doctest::Approx(0.19620232259933199).epsilon(1e-12));
  const auto w1 = temperature_weights({{"a", 10'000}, {"b", 1'000}, {"c", 100}}, 1.0);
  CHECK(w1.at("a") == doctest::Approx(10000.0 / 11100.0).epsilon(1e-12));
  CHECK(w1.at("b") == doctest::Approx(1000.0 / 11100.0).epsilon(1e-12));
  CHECK(w1.at("c") == doctest::Approx(100.0 / 11100.0).epsilon(1e-12));
}

TEST_CASE("temperature_weights: properties") {
  Rng rng = Rng::derive(99, {});
  for (int trial = 0; trial < 50; ++trial) {
    std::map<std::string, std::size_t> counts;
    const int n = 2 + static_cast<int>(rng.next_below(6));
    for (int i = 0; i < n; ++i) counts["k" + std::to_string(i)] = 1 + rng.next_below(1'000'000);
    const double t1 = 0.5 + rng.next_double() * 4.0;
    const double t2 = t1 + 0.5 + rng.next_double() * 4.0;
    const auto w1 = temperature_weights(counts, t1);
    const auto w2 = temperature_weights(counts, t2);

    double sum1 = 0.0;
    for (const auto& [k, v] : w1) sum1 += v;
    CHECK(std::abs(sum1 - 1.0) <= 1e-12);

    // Ordering by weight matches ordering by count.
    for (const auto& [ka, ca] : counts) {
      for (const auto& [kb, cb] : counts) {
        if (ca > cb) CHECK(w1.at(ka) >= w1.at(kb));
      }
    }
    // Higher temperature flattens: the max-probability entry shrinks.
    std::string argmax;
    std::size_t best = 0;
    for (const auto& [k, c] : counts) {
      if (c > best) {
        best = c;
        argmax = k;
      }
    }
    CHECK(w1.at(argmax) >= w2.at(argmax) - 1e-12);
  }
}

TEST_CASE("temperature_weights: invalid inputs name the offender") {
  CHECK_THROWS_AS(temperature_weights({}, 5.0), std::invalid_argument);
  CHECK_THROWS_WITH_AS(temperature_weights({{"bad", 0}}, 5.0), doctest::Contains("bad"), std::invalid_argument);
  CHECK_THROWS_AS(temperature_weights({{"a", 1}}, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(temperature_weights({{"a", 1}}, -2.0), std::invalid_argument);
}

TEST_CASE("sample_mixture: single source and determinism") {
  const Corpus c = make_corpus("aa-bb", 10);
  MixtureSpec spec;
  spec.sources.push_back(MixtureSource{c.direction, &c, std::nullopt});
  spec.total_size = 50;
  spec.seed = 7;
  const auto draw1 = sample_mixture(spec);
  CHECK(draw1.size() == 50);
  for (const auto& p : draw1) CHECK(p.src_lang.code == "aa");
  const auto draw2 = sample_mixture(spec);
  REQUIRE(draw1.size() == draw2.size());
  for (std::size_t i = 0; i < draw1.size(); ++i) {
    CHECK(draw1[i].src == draw2[i].src);
    CHECK(draw1[i].tgt == draw2[i].tgt);
  }
}

TEST_CASE("sample_mixture: empirical frequencies track the weights") {
  const Corpus big = make_corpus("aa-bb", 10'000);
  const Corpus small = make_corpus("cc-dd", 100);
  MixtureSpec spec;
  spec.sources.push_back(MixtureSource{big.direction, &big, std::nullopt});
  spec.sources.push_back(MixtureSource{small.direction, &small, std::nullopt});
  spec.temperature = 5.0;
  spec.total_size = 100'000;
  spec.seed = 12345;
  const auto draws = sample_mixture(spec);
  std::size_t n_big = 0;
  for (const auto& p : draws) {
    if (p.src_lang.code == "aa") ++n_big;
  }
  const auto w = temperature_weights({{"aa-bb", 10'000}, {"cc-dd", 100}}, 5.0);
  const double freq = static_cast<double>(n_big) / draws.size();
  CHECK(std::abs(freq - w.at("aa-bb")) < 0.01);
}

TEST_CASE("sample_mixture: direction multiset depends on counts, not content") {
  const Corpus a1 = make_corpus("aa-bb", 500, "first");
  const Corpus a2 = make_corpus("aa-bb", 500, "second");
  const Corpus b = make_corpus("cc-dd", 50);
  auto directions = [&](const Corpus& variant) {
    MixtureSpec spec;
    spec.sources.push_back(MixtureSource{variant.direction, &variant, std::nullopt});
    spec.sources.push_back(MixtureSource{b.direction, &b, std::nullopt});
    spec.total_size = 2'000;
    spec.seed = 5;
    std::vector<std::string> keys;
    for (const auto& p : sample_mixture(spec)) keys.push_back(p.src_lang.code + "-" + p.tgt_lang.code);
    return keys;
  };
  CHECK(directions(a1) == directions(a2));
}

TEST_CASE("sample_mixture: caps apply before weighting") {
  const Corpus big = make_corpus("aa-bb", 10'000);
  const Corpus small = make_corpus("cc-dd", 100);
  MixtureSpec spec;
  spec.sources.push_back(MixtureSource{big.direction, &big, 100});  // capped to parity
  spec.sources.push_back(MixtureSource{small.direction, &small, std::nullopt});
  spec.temperature = 1.0;
  spec.total_size = 50'000;
  spec.seed = 99;
  std::size_t n_big = 0;
  std::size_t max_index = 0;
  for (const auto& p : sample_mixture(spec)) {
    if (p.src_lang.code == "aa") {
      ++n_big;
      max_index = std::max(max_index, static_cast<std::size_t>(std::stoul(p.src.substr(1))));
    }
  }
  // Equal capped counts at T=1: close to half.
  CHECK(std::abs(static_cast<double>(n_big) / 50'000 - 0.5) < 0.01);
  CHECK(max_index < 100);  // only the capped prefix is drawn
}

TEST_CASE("sample_mixture: unresolved source is a configuration error") {
  MixtureSpec spec;
  spec.sources.push_back(MixtureSource{parse_direction("aa-bb"), nullptr, std::nullopt});
  spec.total_size = 1;
  CHECK_THROWS_AS(sample_mixture(spec), ConfigError);
}

TEST_CASE("tag_target: prefixes the tag once") {
  SentencePair p{make_language("en"), make_language("id"), "hello world", "halo dunia", Origin::parallel()};
  const SentencePair tagged = tag_target(p);
  CHECK(tagged.tgt == "__id__ halo dunia");
  CHECK(tagged.src == "hello world");
  CHECK_THROWS_AS(tag_target(tagged), std::invalid_argument);
}

TEST_CASE("language codes are validated") {
  CHECK_THROWS_AS(make_language(""), std::invalid_argument);
  CHECK_THROWS_AS(make_language("EN"), std::invalid_argument);
  CHECK_THROWS_AS(make_language("e1"), std::invalid_argument);
  CHECK(make_language("jv").tag_token() == "__jv__");
  CHECK_THROWS_AS(parse_direction("nodash"), std::invalid_argument);
  CHECK(parse_direction("aa-bb").reversed().key() == "bb-aa");
}

TEST_CASE("synthetic origin survives mixing") {
  Corpus synth = make_corpus("aa-bb", 40);
  for (auto& p : synth.pairs) p.origin = Origin::synthetic_from(DecodeStrategy::top_k(10), 2);
  const Corpus par = make_corpus("aa-bb", 40);
  MixtureSpec spec;
  spec.sources.push_back(MixtureSource{par.direction, &par, std::nullopt});
  spec.sources.push_back(MixtureSource{synth.direction, &synth, std::nullopt});
  spec.total_size = 400;
  spec.seed = 3;
  std::size_t synthetic_seen = 0;
  for (const auto& p : sample_mixture(spec)) {
    if (p.origin.synthetic) {
      ++synthetic_seen;
      CHECK(p.origin.round == 2);
      CHECK(p.origin.strategy == DecodeStrategy::top_k(10));
    }
  }
  CHECK(synthetic_seen > 0);
}

TEST_CASE("corpus files: aligned pair round-trip") {
  testing::TempDir tmp("corpus");
  Corpus c = make_corpus("aa-bb", 5);
  c.pairs[2].src = "unicode \xc3\xa9\xc3\xa8 text";
  save_parallel(tmp.path("train.aa-bb"), c);
  const Corpus loaded = load_parallel(tmp.path("train.aa-bb"), c.direction);
  REQUIRE(loaded.size() == c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    CHECK(loaded.pairs[i].src == c.pairs[i].src);
    CHECK(loaded.pairs[i].tgt == c.pairs[i].tgt);
  }

  // Misaligned files are rejected.
  write_lines(tmp.path("bad.aa-bb.aa"), {"one", "two"});
  write_lines(tmp.path("bad.aa-bb.bb"), {"one"});
  CHECK_THROWS_AS(load_parallel(tmp.path("bad.aa-bb"), c.direction), ConfigError);
}

TEST_CASE("task data: manifest round-trip validates counts") {
  testing::TempDir tmp("task");
  TaskData task;
  task.languages = {make_language("aa"), make_language("bb")};
  task.parallel["aa-bb"] = make_corpus("aa-bb", 6);
  MonoCorpus mono;
  mono.lang = make_language("bb");
  mono.sentences = {"uno", "dos"};
  task.mono["bb"] = mono;
  task.caps["aa-bb"] = 4;
  task.dev.languages = task.languages;
  task.dev.sentences = {{"da", "db"}, {"ea", "eb"}};
  save_task_data(tmp.path("data"), task);

  const TaskData loaded = load_task_data(tmp.path("data/corpus.manifest"));
  CHECK(loaded.languages.size() == 2);
  CHECK(loaded.parallel.at("aa-bb").size() == 6);
  CHECK(loaded.mono.at("bb").sentences.size() == 2);
  CHECK(loaded.caps.at("aa-bb") == 4);
  CHECK(loaded.dev.size() == 2);

  // Corrupt a file: count validation must fail.
  write_lines(tmp.path("data/mono.bb"), {"uno", "dos", "tres"});
  CHECK_THROWS_AS(load_task_data(tmp.path("data/corpus.manifest")), ConfigError);
}

TEST_CASE("text utilities") {
  CHECK(normalize_whitespace("  a\t b\n c  ") == "a b c");
  CHECK(split_words(" x  y ") == std::vector<std::string>{"x", "y"});
  CHECK(join_words({"x", "y"}) == "x y");
  const auto cps = utf8_codepoints("a\xc3\xa9z");
  REQUIRE(cps.size() == 3);
  CHECK(cps[1] == "\xc3\xa9");
}
