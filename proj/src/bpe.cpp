#include "minimt/bpe.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "minimt/text.hpp"

namespace minimt {

namespace {

constexpr const char* kEndMarker = "</w>";
constexpr char kRankSep = '\x1f';

std::string rank_key(const std::string& left, const std::string& right) { return left + kRankSep + right; }

// "abc" -> {"a", "b", "c</w>"}; the final symbol carries the word marker.
std::vector<std::string> word_symbols(const std::string& word) {
  std::vector<std::string> syms = utf8_codepoints(word);
  if (!syms.empty()) syms.back() += kEndMarker;
  return syms;
}

void finalize_tables(BpeVocab& vocab) {
  vocab.id_to_token.clear();
  vocab.token_to_id.clear();
  vocab.merge_rank.clear();
  auto add = [&](const std::string& tok) {
    if (vocab.token_to_id.count(tok)) {
      throw std::invalid_argument("bpe vocabulary: duplicate token `" + tok + "`");
    }
    vocab.token_to_id[tok] = static_cast<int>(vocab.id_to_token.size());
    vocab.id_to_token.push_back(tok);
  };
  for (const auto& s : vocab.specials) add(s);
  for (const auto& a : vocab.alphabet) add(a);
  for (std::size_t r = 0; r < vocab.merges.size(); ++r) {
    const auto& [l, rgt] = vocab.merges[r];
    vocab.merge_rank[rank_key(l, rgt)] = static_cast<int>(r);
    const std::string tok = l + rgt;
    if (!vocab.token_to_id.count(tok)) {
      vocab.token_to_id[tok] = static_cast<int>(vocab.id_to_token.size());
      vocab.id_to_token.push_back(tok);
    }
  }
}

}  // namespace

int BpeVocab::tag_id(const LanguageId& lang) const {
  auto it = token_to_id.find(lang.tag_token());
  if (it == token_to_id.end() || !is_special(it->second)) {
    throw std::invalid_argument("vocabulary has no language tag " + lang.tag_token());
  }
  return it->second;
}

BpeVocab bpe_train(const std::vector<const std::vector<std::string>*>& corpora, int target_size,
                   const std::vector<std::string>& reserved_tags) {
  std::vector<std::string> flat;
  std::size_t total = 0;
  for (const auto* c : corpora) total += c->size();
  flat.reserve(total);
  for (const auto* c : corpora) flat.insert(flat.end(), c->begin(), c->end());
  return bpe_train(flat, target_size, reserved_tags);
}

BpeVocab bpe_train(const std::vector<std::string>& sentences, int target_size,
                   const std::vector<std::string>& reserved_tags) {
  BpeVocab vocab;
  vocab.target_size = target_size;
  vocab.specials = {"__pad__", "__bos__", "__eos__", "__unk__"};
  for (const auto& t : reserved_tags) {
    if (std::find(vocab.specials.begin(), vocab.specials.end(), t) == vocab.specials.end()) {
      vocab.specials.push_back(t);
    }
  }
  const std::set<std::string> reserved(vocab.specials.begin(), vocab.specials.end());

  // Word frequencies; reserved tokens stay out of the statistics.
  std::map<std::string, long long> word_freq;
  for (const auto& s : sentences) {
    for (const auto& w : split_words(normalize_whitespace(s))) {
      if (!reserved.count(w)) ++word_freq[w];
    }
  }
  if (word_freq.empty()) throw std::invalid_argument("bpe_train: corpus is empty");

  struct Entry {
    std::vector<std::string> symbols;
    long long freq;
  };
  std::vector<Entry> words;
  words.reserve(word_freq.size());
  std::set<std::string> alphabet;
  for (const auto& [w, f] : word_freq) {
    Entry e{word_symbols(w), f};
    for (const auto& s : e.symbols) alphabet.insert(s);
    words.push_back(std::move(e));
  }
  vocab.alphabet.assign(alphabet.begin(), alphabet.end());

  // target_size == specials + alphabet yields a character-level vocabulary.
  int token_count = static_cast<int>(vocab.specials.size() + vocab.alphabet.size());
  if (target_size < token_count) {
    throw std::invalid_argument("bpe_train: target_size " + std::to_string(target_size) +
                                " is below specials + initial symbols (" + std::to_string(token_count) + ")");
  }

  std::set<std::string> produced(vocab.alphabet.begin(), vocab.alphabet.end());
  while (token_count < target_size) {
    // Sorted map: the first max-frequency pair is the lexicographically
    // smallest, which is the tie-break rule.
    std::map<std::pair<std::string, std::string>, long long> pair_freq;
    for (const auto& e : words) {
      for (std::size_t i = 0; i + 1 < e.symbols.size(); ++i) {
        pair_freq[{e.symbols[i], e.symbols[i + 1]}] += e.freq;
      }
    }
    std::pair<std::string, std::string> best;
    long long best_freq = 0;
    for (const auto& [p, f] : pair_freq) {
      if (f > best_freq) {
        best = p;
        best_freq = f;
      }
    }
    if (best_freq < 2) break;

    vocab.merges.push_back(best);
    const std::string merged = best.first + best.second;
    for (auto& e : words) {
      auto& syms = e.symbols;
      std::size_t out = 0;
      for (std::size_t i = 0; i < syms.size();) {
        if (i + 1 < syms.size() && syms[i] == best.first && syms[i + 1] == best.second) {
          syms[out++] = merged;
          i += 2;
        } else {
          if (out != i) syms[out] = std::move(syms[i]);
          ++out;
          ++i;
        }
      }
      syms.resize(out);
    }
    if (produced.insert(merged).second) ++token_count;
  }

  finalize_tables(vocab);
  return vocab;
}

std::vector<int> bpe_encode(const BpeVocab& vocab, const std::string& sentence) {
  std::vector<int> ids;
  for (const auto& word : split_words(normalize_whitespace(sentence))) {
    // Reserved tokens pass through atomically.
    auto sp = vocab.token_to_id.find(word);
    if (sp != vocab.token_to_id.end() && vocab.is_special(sp->second)) {
      ids.push_back(sp->second);
      continue;
    }
    std::vector<std::string> syms = word_symbols(word);
    // Repeatedly apply the lowest-ranked adjacent merge, all occurrences at once.
    for (;;) {
      int best_rank = -1;
      for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
        auto it = vocab.merge_rank.find(rank_key(syms[i], syms[i + 1]));
        if (it != vocab.merge_rank.end() && (best_rank < 0 || it->second < best_rank)) {
          best_rank = it->second;
        }
      }
      if (best_rank < 0) break;
      const auto& [left, right] = vocab.merges[best_rank];
      const std::string merged = left + right;
      std::size_t out = 0;
      for (std::size_t i = 0; i < syms.size();) {
        if (i + 1 < syms.size() && syms[i] == left && syms[i + 1] == right) {
          syms[out++] = merged;
          i += 2;
        } else {
          if (out != i) syms[out] = std::move(syms[i]);
          ++out;
          ++i;
        }
      }
      syms.resize(out);
    }
    for (const auto& s : syms) {
      auto it = vocab.token_to_id.find(s);
      ids.push_back(it == vocab.token_to_id.end() ? BpeVocab::kUnk : it->second);
    }
  }
  return ids;
}

std::string bpe_decode(const BpeVocab& vocab, const std::vector<int>& ids) {
  const std::string marker = kEndMarker;
  std::vector<std::string> words;
  std::string current;
  auto flush = [&]() {
    if (!current.empty()) {
      words.push_back(current);
      current.clear();
    }
  };
  for (int id : ids) {
    if (id < 0 || id >= vocab.size()) {
      throw std::invalid_argument("bpe_decode: id " + std::to_string(id) + " is out of range (vocab size " +
                                  std::to_string(vocab.size()) + ")");
    }
    if (vocab.is_core_special(id)) continue;
    if (vocab.is_special(id)) {  // language tag: emit as its own word
      flush();
      words.push_back(vocab.id_to_token[id]);
      continue;
    }
    const std::string& tok = vocab.id_to_token[id];
    if (tok.size() >= marker.size() && tok.compare(tok.size() - marker.size(), marker.size(), marker) == 0) {
      current += tok.substr(0, tok.size() - marker.size());
      flush();
    } else {
      current += tok;
    }
  }
  flush();
  return join_words(words);
}

std::string serialize_vocab(const BpeVocab& vocab) {
  std::ostringstream out;
  out << "#version 1\n";
  out << "#size " << vocab.size() << "\n";
  out << "#specials " << vocab.specials.size() << "\n";
  for (const auto& s : vocab.specials) out << s << "\n";
  out << "#alphabet " << vocab.alphabet.size() << "\n";
  for (const auto& a : vocab.alphabet) out << a << "\n";
  out << "#merges " << vocab.merges.size() << "\n";
  for (const auto& [l, r] : vocab.merges) out << l << " " << r << "\n";
  return out.str();
}

void save_vocab(const std::string& path, const BpeVocab& vocab) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open vocabulary file for writing: " + path);
  out << serialize_vocab(vocab);
  if (!out) throw ConfigError("write failed: " + path);
}

BpeVocab load_vocab(const std::string& path) {
  const auto lines = read_lines(path);
  std::size_t i = 0;
  auto expect_header = [&](const std::string& name) -> long long {
    if (i >= lines.size() || lines[i].rfind("#" + name + " ", 0) != 0) {
      throw ConfigError(path + ": expected `#" + name + " N` at line " + std::to_string(i + 1));
    }
    long long v = std::stoll(lines[i].substr(name.size() + 2));
    ++i;
    return v;
  };
  if (lines.empty() || lines[0] != "#version 1") throw ConfigError(path + ": not a vocabulary file (missing #version 1)");
  ++i;
  BpeVocab vocab;
  const long long size = expect_header("size");
  const long long n_specials = expect_header("specials");
  for (long long k = 0; k < n_specials; ++k) {
    if (i >= lines.size()) throw ConfigError(path + ": truncated specials block");
    vocab.specials.push_back(lines[i++]);
  }
  const long long n_alpha = expect_header("alphabet");
  for (long long k = 0; k < n_alpha; ++k) {
    if (i >= lines.size()) throw ConfigError(path + ": truncated alphabet block");
    vocab.alphabet.push_back(lines[i++]);
  }
  const long long n_merges = expect_header("merges");
  for (long long k = 0; k < n_merges; ++k) {
    if (i >= lines.size()) throw ConfigError(path + ": truncated merges block");
    const std::string& line = lines[i++];
    auto space = line.find(' ');
    if (space == std::string::npos) throw ConfigError(path + ": malformed merge at line " + std::to_string(i));
    vocab.merges.emplace_back(line.substr(0, space), line.substr(space + 1));
  }
  vocab.target_size = static_cast<int>(size);
  finalize_tables(vocab);
  if (vocab.size() != size) {
    throw ConfigError(path + ": token count " + std::to_string(vocab.size()) + " does not match #size " +
                      std::to_string(size));
  }
  return vocab;
}

std::uint64_t vocab_fingerprint(const BpeVocab& vocab) { return fnv1a64(serialize_vocab(vocab)); }

}  // namespace minimt
