#include <doctest.h>

#include "minimt/common.hpp"
#include "minimt/config.hpp"

using namespace minimt;

TEST_CASE("ini: sections, keys and order") {
  const auto ini = IniFile::parse_string(
      "# comment\n"
      "[alpha]\n"
      "x = 1\n"
      "name = hello world\n"
      "\n"
      "[beta]\n"
      "y = 2.5\n"
      "flag = true\n",
      "test.cfg");
  CHECK(ini.sections() == std::vector<std::string>{"alpha", "beta"});
  CHECK(ini.keys("alpha") == std::vector<std::string>{"x", "name"});
  CHECK(ini.get_int("alpha", "x") == 1);
  CHECK(ini.get("alpha", "name") == "hello world");
  CHECK(ini.get_double("beta", "y") == doctest::Approx(2.5));
  CHECK(ini.get_bool_or("beta", "flag", false));
  CHECK(ini.get_or("beta", "missing", "dflt") == "dflt");
  CHECK(ini.line_of("beta", "y") == 7);
}

TEST_CASE("ini: errors carry file and line") {
  CHECK_THROWS_WITH_AS(IniFile::parse_string("x = 1\n", "f.cfg"), doctest::Contains("f.cfg:1"), ConfigError);
  CHECK_THROWS_WITH_AS(IniFile::parse_string("[a]\nnonsense\n", "f.cfg"), doctest::Contains("f.cfg:2"), ConfigError);
  CHECK_THROWS_WITH_AS(IniFile::parse_string("[a]\nx = 1\nx = 2\n", "f.cfg"), doctest::Contains("duplicate key"),
                       ConfigError);
  CHECK_THROWS_WITH_AS(IniFile::parse_string("[a]\n[a]\n", "f.cfg"), doctest::Contains("duplicate section"),
                       ConfigError);
  const auto ini = IniFile::parse_string("[a]\nx = notanumber\n", "f.cfg");
  CHECK_THROWS_WITH_AS(ini.get_int("a", "x"), doctest::Contains("f.cfg:2"), ConfigError);
  CHECK_THROWS_AS(ini.get("a", "missing"), ConfigError);
}

TEST_CASE("ini: split_list") {
  CHECK(split_list("a, b ,c") == std::vector<std::string>{"a", "b", "c"});
  CHECK(split_list("") == std::vector<std::string>{});
  CHECK(split_list("one") == std::vector<std::string>{"one"});
}

TEST_CASE("ini: writer emits parseable text") {
  IniWriter w;
  w.section("s");
  w.kv("a", 7);
  w.kv("b", std::string("text"));
  w.kv("c", 1.25, 2);
  const auto ini = IniFile::parse_string(w.str(), "w");
  CHECK(ini.get_int("s", "a") == 7);
  CHECK(ini.get("s", "b") == "text");
  CHECK(ini.get("s", "c") == "1.25");
}

TEST_CASE("rng: deterministic, stream-independent") {
  Rng a = Rng::derive(42, {1, 2});
  Rng b = Rng::derive(42, {1, 2});
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng c = Rng::derive(42, {1, 3});
  CHECK(Rng::derive(42, {1, 2}).next_u64() != c.next_u64());

  Rng d = Rng::derive(7, {});
  for (int i = 0; i < 1000; ++i) {
    const double x = d.next_double();
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
    CHECK(d.next_below(10) < 10);
  }
}

TEST_CASE("fnv: stable fingerprints") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
  CHECK(fnv1a64("a") != fnv1a64("b"));
  CHECK(to_hex(0x1234) == "0000000000001234");
}
