#include "minimt/cipher.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

#include "minimt/text.hpp"

namespace minimt {

namespace {

constexpr std::uint64_t kStreamWords = 1;
constexpr std::uint64_t kStreamCoins = 2;
constexpr std::uint64_t kStreamParallel = 3;
constexpr std::uint64_t kStreamMono = 4;
constexpr std::uint64_t kStreamDev = 5;

// Word classes of the latent grammar, as fractions of the latent vocabulary.
enum WordClass { kDet = 0, kAdj, kNoun, kVerb, kNumClasses };

struct ClassRanges {
  int lo[kNumClasses];
  int hi[kNumClasses];
};

ClassRanges class_ranges(int vocab) {
  ClassRanges r{};
  // det 10%, adj 20%, noun 45%, verb 25%; every class keeps at least one word.
  const int det = std::max(1, vocab / 10);
  const int adj = std::max(1, vocab / 5);
  const int verb = std::max(1, vocab / 4);
  const int noun = std::max(1, vocab - det - adj - verb);
  int pos = 0;
  const int sizes[kNumClasses] = {det, adj, noun, verb};
  for (int c = 0; c < kNumClasses; ++c) {
    r.lo[c] = pos;
    pos += sizes[c];
    r.hi[c] = std::min(pos, vocab);
  }
  r.hi[kNumClasses - 1] = vocab;
  return r;
}

// Skewed pick inside a class: low ids are frequent, Zipf-like.
int pick_word(Rng& rng, const ClassRanges& r, int cls) {
  const int lo = r.lo[cls], hi = r.hi[cls];
  const double u = rng.next_double();
  return lo + static_cast<int>(u * u * (hi - lo));
}

// Latent sentence from a fixed Markov grammar over word classes, exactly len words.
std::vector<int> latent_sentence(Rng& rng, const ClassRanges& ranges, int len) {
  std::vector<int> ids;
  ids.reserve(len);
  int cls = kDet;
  while (static_cast<int>(ids.size()) < len) {
    ids.push_back(pick_word(rng, ranges, cls));
    const double u = rng.next_double();
    switch (cls) {
      case kDet:
        cls = u < 0.35 ? kAdj : kNoun;
        break;
      case kAdj:
        cls = u < 0.25 ? kAdj : kNoun;
        break;
      case kNoun:
        cls = u < 0.7 ? kVerb : kDet;
        break;
      default:  // verb
        cls = kDet;
        break;
    }
  }
  return ids;
}

// Distinct pseudo-words of 3..7 lowercase letters.
std::string fresh_word(Rng& rng, std::set<std::string>& used) {
  for (;;) {
    const int len = 3 + static_cast<int>(rng.next_below(5));
    std::string w;
    for (int i = 0; i < len; ++i) w.push_back(static_cast<char>('a' + rng.next_below(26)));
    if (used.insert(w).second) return w;
  }
}

std::vector<std::string> render(const std::vector<int>& latent, const std::vector<std::string>& surface, bool reorder) {
  std::vector<std::string> words;
  words.reserve(latent.size());
  for (int id : latent) words.push_back(surface[id]);
  if (reorder) {
    for (std::size_t i = 0; i + 1 < words.size(); i += 2) std::swap(words[i], words[i + 1]);
  }
  return words;
}

}  // namespace

CipherOracle::CipherOracle(std::vector<LanguageId> languages, std::vector<std::vector<std::string>> surface,
                           std::vector<bool> reorder)
    : languages_(std::move(languages)), surface_(std::move(surface)), reorder_(std::move(reorder)) {
  inverse_.resize(surface_.size());
  for (std::size_t l = 0; l < surface_.size(); ++l) {
    for (std::size_t id = 0; id < surface_[l].size(); ++id) inverse_[l][surface_[l][id]] = static_cast<int>(id);
  }
}

int CipherOracle::index_of(const LanguageId& lang) const {
  for (std::size_t i = 0; i < languages_.size(); ++i) {
    if (languages_[i] == lang) return static_cast<int>(i);
  }
  throw std::invalid_argument("cipher oracle: unknown language `" + lang.code + "`");
}

const std::vector<std::string>& CipherOracle::surface_vocab(const LanguageId& lang) const {
  return surface_[index_of(lang)];
}

std::string CipherOracle::translate(const LanguageId& from, const LanguageId& to, const std::string& sentence) const {
  const int a = index_of(from);
  const int b = index_of(to);
  std::vector<std::string> words = split_words(sentence);
  if (reorder_[a]) {  // the swap is an involution
    for (std::size_t i = 0; i + 1 < words.size(); i += 2) std::swap(words[i], words[i + 1]);
  }
  std::vector<int> latent;
  latent.reserve(words.size());
  for (const auto& w : words) {
    auto it = inverse_[a].find(w);
    if (it == inverse_[a].end()) {
      throw std::invalid_argument("cipher oracle: `" + w + "` is not a word of language " + from.code);
    }
    latent.push_back(it->second);
  }
  return join_words(render(latent, surface_[b], reorder_[b]));
}

LanguageId cipher_language(int index) {
  std::string code = "l";
  int i = index;
  do {
    code.push_back(static_cast<char>('a' + i % 26));
    i /= 26;
  } while (i > 0);
  return LanguageId{code};
}

CipherTask generate_cipher_task(const CipherTaskConfig& cfg) {
  if (cfg.n_languages < 2) throw std::invalid_argument("cipher task needs at least 2 languages");
  if (cfg.base_vocab_size < kNumClasses) throw std::invalid_argument("cipher base vocabulary too small");
  if (!(cfg.overlap >= 0.0 && cfg.overlap <= 1.0)) {
    throw std::invalid_argument("cipher overlap must be in [0,1], got " + std::to_string(cfg.overlap));
  }
  if (cfg.sentence_len_min < 1 || cfg.sentence_len_max < cfg.sentence_len_min) {
    throw std::invalid_argument("cipher sentence length range is invalid");
  }

  const int n = cfg.n_languages;
  const int vocab = cfg.base_vocab_size;
  std::vector<LanguageId> languages;
  for (int i = 0; i < n; ++i) languages.push_back(cipher_language(i));

  // Surface tables. A per-latent-id coin decides whether the similar group
  // shares one surface form for that id. With n == 2 both languages form the
  // group; otherwise language 0 stays fully private.
  const int group_start = n == 2 ? 0 : 1;
  Rng word_rng = Rng::derive(cfg.seed, {kStreamWords});
  Rng coin_rng = Rng::derive(cfg.seed, {kStreamCoins});
  std::set<std::string> used;
  std::vector<std::vector<std::string>> surface(n, std::vector<std::string>(vocab));
  for (int id = 0; id < vocab; ++id) {
    const bool shared = coin_rng.next_double() < cfg.overlap;
    std::string shared_word = shared ? fresh_word(word_rng, used) : std::string();
    for (int l = 0; l < n; ++l) {
      if (shared && l >= group_start) {
        surface[l][id] = shared_word;
      } else {
        surface[l][id] = fresh_word(word_rng, used);
      }
    }
  }

  std::vector<bool> reorder(n, false);
  if (cfg.reorder) {
    for (int l = 1; l < n; l += 2) reorder[l] = true;
  }

  CipherTask task;
  task.oracle = CipherOracle(languages, surface, reorder);
  task.data.languages = languages;

  const ClassRanges ranges = class_ranges(vocab);
  auto sentence_len = [&](Rng& rng) {
    return cfg.sentence_len_min + static_cast<int>(rng.next_below(cfg.sentence_len_max - cfg.sentence_len_min + 1));
  };
  auto lang_index = [&](const LanguageId& lang) {
    for (int i = 0; i < n; ++i) {
      if (languages[i] == lang) return i;
    }
    throw std::invalid_argument("cipher task: unknown language `" + lang.code + "` in sizes");
  };

  // Parallel corpora: each direction draws its own latent stream.
  std::uint64_t pair_stream = 0;
  for (const auto& [key, count] : cfg.parallel_sizes) {
    const Direction dir = parse_direction(key);
    const int a = lang_index(dir.src);
    const int b = lang_index(dir.tgt);
    if (a == b) throw std::invalid_argument("cipher task: direction " + key + " maps a language to itself");
    Rng rng = Rng::derive(cfg.seed, {kStreamParallel, pair_stream++});
    Corpus c;
    c.direction = dir;
    for (std::size_t i = 0; i < count; ++i) {
      const auto latent = latent_sentence(rng, ranges, sentence_len(rng));
      c.pairs.push_back(SentencePair{dir.src, dir.tgt, join_words(render(latent, surface[a], reorder[a])),
                                     join_words(render(latent, surface[b], reorder[b])), Origin::parallel()});
    }
    task.data.parallel[key] = std::move(c);
  }

  // Monolingual corpora.
  std::uint64_t mono_stream = 0;
  for (const auto& [code, count] : cfg.mono_sizes) {
    const int l = lang_index(LanguageId{code});
    Rng rng = Rng::derive(cfg.seed, {kStreamMono, mono_stream++});
    MonoCorpus m;
    m.lang = languages[l];
    for (std::size_t i = 0; i < count; ++i) {
      const auto latent = latent_sentence(rng, ranges, sentence_len(rng));
      m.sentences.push_back(join_words(render(latent, surface[l], reorder[l])));
    }
    task.data.mono[code] = std::move(m);
  }

  // N-way parallel dev set.
  Rng dev_rng = Rng::derive(cfg.seed, {kStreamDev});
  task.data.dev.languages = languages;
  task.data.dev.sentences.assign(n, {});
  for (std::size_t i = 0; i < cfg.dev_size; ++i) {
    const auto latent = latent_sentence(dev_rng, ranges, sentence_len(dev_rng));
    for (int l = 0; l < n; ++l) {
      task.data.dev.sentences[l].push_back(join_words(render(latent, surface[l], reorder[l])));
    }
  }
  return task;
}

}  // namespace minimt
