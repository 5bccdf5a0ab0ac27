#include "minimt/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <stdexcept>

#include "minimt/config.hpp"
#include "minimt/text.hpp"

namespace minimt {

LanguageId make_language(const std::string& code) {
  if (code.empty()) throw std::invalid_argument("language code must be non-empty");
  for (char c : code) {
    if (c < 'a' || c > 'z') {
      throw std::invalid_argument("language code must be lowercase ASCII letters: `" + code + "`");
    }
  }
  return LanguageId{code};
}

std::string DecodeStrategy::label() const {
  switch (kind) {
    case StrategyKind::Beam:
      return "beam:" + std::to_string(param);
    case StrategyKind::TopK:
      return "topk:" + std::to_string(param);
    case StrategyKind::Unconstrained:
      return "unconstrained";
  }
  return "?";
}

DecodeStrategy DecodeStrategy::parse(const std::string& s) {
  if (s == "unconstrained") return unconstrained();
  auto colon = s.find(':');
  if (colon != std::string::npos) {
    const std::string head = s.substr(0, colon);
    const std::string tail = s.substr(colon + 1);
    try {
      int v = std::stoi(tail);
      if (v >= 1) {
        if (head == "beam") return beam(v);
        if (head == "topk") return top_k(v);
      }
    } catch (const std::exception&) {
    }
  }
  throw std::invalid_argument("unknown decode strategy: `" + s + "` (expected beam:N, topk:N or unconstrained)");
}

Direction parse_direction(const std::string& key) {
  auto dash = key.find('-');
  if (dash == std::string::npos || dash == 0 || dash + 1 >= key.size()) {
    throw std::invalid_argument("malformed direction `" + key + "` (expected `src-tgt`)");
  }
  return Direction{make_language(key.substr(0, dash)), make_language(key.substr(dash + 1))};
}

std::size_t MixtureSource::effective_size() const {
  const std::size_t n = corpus ? corpus->size() : 0;
  return cap ? std::min(*cap, n) : n;
}

std::map<std::string, double> temperature_weights(const std::map<std::string, std::size_t>& counts, double T) {
  if (counts.empty()) throw std::invalid_argument("temperature_weights: empty count mapping");
  if (!(T > 0.0)) throw std::invalid_argument("temperature_weights: temperature must be > 0, got " + std::to_string(T));
  double total = 0.0;
  for (const auto& [key, n] : counts) {
    if (n == 0) throw std::invalid_argument("temperature_weights: zero count for `" + key + "`");
    total += static_cast<double>(n);
  }
  // (D_i / sum D)^(1/T), then normalized so the weights form a distribution.
  std::map<std::string, double> w;
  double norm = 0.0;
  for (const auto& [key, n] : counts) {
    const double t = std::pow(static_cast<double>(n) / total, 1.0 / T);
    w[key] = t;
    norm += t;
  }
  for (auto& [key, v] : w) v /= norm;
  return w;
}

std::vector<SentencePair> sample_mixture(const MixtureSpec& spec) {
  if (spec.sources.empty()) throw ConfigError("sample_mixture: no sources configured");
  for (const auto& s : spec.sources) {
    if (s.corpus == nullptr) throw ConfigError("sample_mixture: unresolved corpus for direction " + s.direction.key());
    if (s.corpus->direction.key() != s.direction.key()) {
      throw ConfigError("sample_mixture: source direction " + s.direction.key() + " does not match corpus direction " +
                        s.corpus->direction.key());
    }
  }

  // Group capped sources per direction; counts feed the temperature weighting.
  struct Pool {
    std::vector<const MixtureSource*> sources;
    std::size_t count = 0;
  };
  std::map<std::string, Pool> pools;
  for (const auto& s : spec.sources) {
    if (s.effective_size() == 0) continue;  // empty sources carry no weight
    Pool& p = pools[s.direction.key()];
    p.sources.push_back(&s);
    p.count += s.effective_size();
  }
  if (pools.empty()) throw ConfigError("sample_mixture: all sources are empty");

  std::map<std::string, std::size_t> counts;
  for (const auto& [key, p] : pools) counts[key] = p.count;
  const auto weights = temperature_weights(counts, spec.temperature);

  // Cumulative distribution in key order (std::map iteration is sorted).
  std::vector<std::pair<const Pool*, double>> cdf;
  double acc = 0.0;
  for (const auto& [key, p] : pools) {
    acc += weights.at(key);
    cdf.emplace_back(&p, acc);
  }
  cdf.back().second = 1.0;

  Rng rng = Rng::derive(spec.seed, {0x6d69784full});  // "mixO"
  std::vector<SentencePair> out;
  out.reserve(spec.total_size);
  for (std::size_t i = 0; i < spec.total_size; ++i) {
    const double u = rng.next_double();
    const Pool* pool = cdf.back().first;
    for (const auto& [p, edge] : cdf) {
      if (u < edge) {
        pool = p;
        break;
      }
    }
    // Uniform over the pooled capped sources (offsets address sources in order).
    std::size_t off = static_cast<std::size_t>(rng.next_below(pool->count));
    for (const MixtureSource* s : pool->sources) {
      const std::size_t n = s->effective_size();
      if (off < n) {
        out.push_back(s->corpus->pairs[off]);
        break;
      }
      off -= n;
    }
  }
  return out;
}

bool is_tagged(const std::string& tgt, const LanguageId& tgt_lang) {
  const std::string tag = tgt_lang.tag_token();
  return tgt.compare(0, tag.size(), tag) == 0 &&
         (tgt.size() == tag.size() || tgt[tag.size()] == ' ');
}

SentencePair tag_target(const SentencePair& pair) {
  if (is_tagged(pair.tgt, pair.tgt_lang)) {
    throw std::invalid_argument("tag_target: target already tagged with " + pair.tgt_lang.tag_token());
  }
  SentencePair tagged = pair;
  tagged.tgt = pair.tgt_lang.tag_token() + " " + pair.tgt;
  return tagged;
}

Corpus load_parallel(const std::string& stem, const Direction& dir, Origin origin) {
  const std::string src_path = stem + "." + dir.src.code;
  const std::string tgt_path = stem + "." + dir.tgt.code;
  const auto src_lines = read_lines(src_path);
  const auto tgt_lines = read_lines(tgt_path);
  if (src_lines.size() != tgt_lines.size()) {
    throw ConfigError("parallel corpus misaligned: " + src_path + " has " + std::to_string(src_lines.size()) +
                      " lines, " + tgt_path + " has " + std::to_string(tgt_lines.size()));
  }
  Corpus c;
  c.direction = dir;
  c.pairs.reserve(src_lines.size());
  for (std::size_t i = 0; i < src_lines.size(); ++i) {
    std::string s = normalize_whitespace(src_lines[i]);
    std::string t = normalize_whitespace(tgt_lines[i]);
    if (s.empty() || t.empty()) {
      throw ConfigError("empty sentence at line " + std::to_string(i + 1) + " of " + stem);
    }
    c.pairs.push_back(SentencePair{dir.src, dir.tgt, std::move(s), std::move(t), origin});
  }
  return c;
}

void save_parallel(const std::string& stem, const Corpus& corpus) {
  std::vector<std::string> src_lines, tgt_lines;
  src_lines.reserve(corpus.size());
  tgt_lines.reserve(corpus.size());
  for (const auto& p : corpus.pairs) {
    src_lines.push_back(p.src);
    tgt_lines.push_back(p.tgt);
  }
  write_lines(stem + "." + corpus.direction.src.code, src_lines);
  write_lines(stem + "." + corpus.direction.tgt.code, tgt_lines);
}

MonoCorpus load_mono(const std::string& path, const LanguageId& lang) {
  MonoCorpus m;
  m.lang = lang;
  for (auto& line : read_lines(path)) {
    std::string s = normalize_whitespace(line);
    if (s.empty()) throw ConfigError("empty sentence in monolingual corpus " + path);
    m.sentences.push_back(std::move(s));
  }
  return m;
}

void save_mono(const std::string& path, const MonoCorpus& mono) { write_lines(path, mono.sentences); }

int DevSet::lang_index(const LanguageId& lang) const {
  for (std::size_t i = 0; i < languages.size(); ++i) {
    if (languages[i] == lang) return static_cast<int>(i);
  }
  return -1;
}

const Corpus* TaskData::find_parallel(const Direction& dir) const {
  auto it = parallel.find(dir.key());
  return it == parallel.end() ? nullptr : &it->second;
}

void save_task_data(const std::string& dir, const TaskData& task) {
  std::filesystem::create_directories(dir);
  IniWriter w;
  w.section("languages");
  std::string codes;
  for (const auto& l : task.languages) {
    if (!codes.empty()) codes += ", ";
    codes += l.code;
  }
  w.kv("codes", codes);

  w.section("parallel");
  for (const auto& [key, corpus] : task.parallel) {
    const std::string stem = "train." + key;
    save_parallel(dir + "/" + stem, corpus);
    w.kv(stem, static_cast<long long>(corpus.size()));
  }

  w.section("mono");
  for (const auto& [code, mono] : task.mono) {
    const std::string name = "mono." + code;
    save_mono(dir + "/" + name, mono);
    w.kv(name, static_cast<long long>(mono.sentences.size()));
  }

  if (!task.caps.empty()) {
    w.section("caps");
    for (const auto& [key, cap] : task.caps) w.kv(key, static_cast<long long>(cap));
  }

  w.section("dev");
  w.kv("stem", "dev");
  w.kv("size", static_cast<long long>(task.dev.size()));
  for (std::size_t i = 0; i < task.dev.languages.size(); ++i) {
    write_lines(dir + "/dev." + task.dev.languages[i].code, task.dev.sentences[i]);
  }
  w.write(dir + "/corpus.manifest");
}

TaskData load_task_data(const std::string& manifest_path) {
  const IniFile ini = IniFile::parse_file(manifest_path);
  const std::string dir = std::filesystem::path(manifest_path).parent_path().string();
  auto resolve = [&](const std::string& rel) { return dir.empty() ? rel : dir + "/" + rel; };

  TaskData task;
  for (const auto& code : split_list(ini.get("languages", "codes"))) {
    task.languages.push_back(make_language(code));
  }
  if (task.languages.empty()) throw ConfigError(manifest_path + ": no languages listed");

  for (const auto& stem : ini.keys("parallel")) {
    const auto expected = static_cast<std::size_t>(ini.get_int("parallel", stem));
    auto dot = stem.rfind('.');
    if (dot == std::string::npos) throw ConfigError(manifest_path + ": parallel stem `" + stem + "` lacks a direction");
    const Direction dir_key = parse_direction(stem.substr(dot + 1));
    Corpus c = load_parallel(resolve(stem), dir_key);
    if (c.size() != expected) {
      throw ConfigError(manifest_path + ": " + stem + " has " + std::to_string(c.size()) + " pairs, manifest says " +
                        std::to_string(expected));
    }
    task.parallel[dir_key.key()] = std::move(c);
  }

  for (const auto& name : ini.keys("mono")) {
    const auto expected = static_cast<std::size_t>(ini.get_int("mono", name));
    auto dot = name.rfind('.');
    if (dot == std::string::npos) throw ConfigError(manifest_path + ": mono name `" + name + "` lacks a language");
    const LanguageId lang = make_language(name.substr(dot + 1));
    MonoCorpus m = load_mono(resolve(name), lang);
    if (m.sentences.size() != expected) {
      throw ConfigError(manifest_path + ": " + name + " has " + std::to_string(m.sentences.size()) +
                        " sentences, manifest says " + std::to_string(expected));
    }
    task.mono[lang.code] = std::move(m);
  }

  if (ini.has_section("caps")) {
    for (const auto& key : ini.keys("caps")) {
      task.caps[key] = static_cast<std::size_t>(ini.get_int("caps", key));
    }
  }

  const std::string dev_stem = ini.get_or("dev", "stem", "dev");
  const auto dev_size = static_cast<std::size_t>(ini.get_int("dev", "size"));
  task.dev.languages = task.languages;
  for (const auto& lang : task.languages) {
    auto lines = read_lines(resolve(dev_stem + "." + lang.code));
    if (lines.size() != dev_size) {
      throw ConfigError(manifest_path + ": dev." + lang.code + " has " + std::to_string(lines.size()) +
                        " lines, manifest says " + std::to_string(dev_size));
    }
    task.dev.sentences.push_back(std::move(lines));
  }
  return task;
}

}  // namespace minimt
