#include "minimt/config.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "minimt/common.hpp"

namespace minimt {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

}  // namespace

IniFile IniFile::parse_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_string(ss.str(), path);
}

IniFile IniFile::parse_string(std::string_view text, const std::string& name) {
  IniFile f;
  f.name_ = name;
  std::size_t pos = 0;
  int lineno = 0;
  Section* cur = nullptr;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    std::string_view raw = text.substr(pos, eol == std::string_view::npos ? text.size() - pos : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++lineno;
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    if (line.front() == '[') {
      if (line.back() != ']') f.fail("unterminated section header", lineno);
      std::string sec = trim(std::string_view(line).substr(1, line.size() - 2));
      if (sec.empty()) f.fail("empty section name", lineno);
      for (const auto& s : f.sections_) {
        if (s.name == sec) f.fail("duplicate section [" + sec + "] (first at line " + std::to_string(s.line) + ")", lineno);
      }
      f.sections_.push_back(Section{sec, lineno, {}, {}});
      cur = &f.sections_.back();
      continue;
    }
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) f.fail("expected `key = value` or `[section]`", lineno);
    if (cur == nullptr) f.fail("`key = value` before any [section]", lineno);
    std::string key = trim(std::string_view(line).substr(0, eq));
    std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) f.fail("empty key", lineno);
    auto it = cur->entries.find(key);
    if (it != cur->entries.end()) {
      f.fail("duplicate key `" + key + "` in [" + cur->name + "] (first at line " + std::to_string(it->second.line) + ")",
             lineno);
    }
    cur->key_order.push_back(key);
    cur->entries[key] = Entry{value, lineno};
  }
  return f;
}

void IniFile::fail(const std::string& msg, int line) const {
  throw ConfigError(name_ + ":" + std::to_string(line) + ": " + msg);
}

const IniFile::Section* IniFile::find_section(const std::string& section) const {
  for (const auto& s : sections_) {
    if (s.name == section) return &s;
  }
  return nullptr;
}

const IniFile::Entry* IniFile::find_entry(const std::string& section, const std::string& key) const {
  const Section* s = find_section(section);
  if (!s) return nullptr;
  auto it = s->entries.find(key);
  return it == s->entries.end() ? nullptr : &it->second;
}

std::vector<std::string> IniFile::sections() const {
  std::vector<std::string> out;
  out.reserve(sections_.size());
  for (const auto& s : sections_) out.push_back(s.name);
  return out;
}

bool IniFile::has_section(const std::string& section) const { return find_section(section) != nullptr; }

std::vector<std::string> IniFile::keys(const std::string& section) const {
  const Section* s = find_section(section);
  return s ? s->key_order : std::vector<std::string>{};
}

bool IniFile::has(const std::string& section, const std::string& key) const {
  return find_entry(section, key) != nullptr;
}

std::string IniFile::get(const std::string& section, const std::string& key) const {
  const Entry* e = find_entry(section, key);
  if (!e) throw ConfigError(name_ + ": missing `" + key + "` in [" + section + "]");
  return e->value;
}

std::string IniFile::get_or(const std::string& section, const std::string& key, const std::string& fallback) const {
  const Entry* e = find_entry(section, key);
  return e ? e->value : fallback;
}

long long IniFile::get_int(const std::string& section, const std::string& key) const {
  const Entry* e = find_entry(section, key);
  if (!e) throw ConfigError(name_ + ": missing `" + key + "` in [" + section + "]");
  try {
    std::size_t used = 0;
    long long v = std::stoll(e->value, &used);
    if (used != e->value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    fail("`" + key + "` is not an integer: `" + e->value + "`", e->line);
  }
}

long long IniFile::get_int_or(const std::string& section, const std::string& key, long long fallback) const {
  return has(section, key) ? get_int(section, key) : fallback;
}

double IniFile::get_double(const std::string& section, const std::string& key) const {
  const Entry* e = find_entry(section, key);
  if (!e) throw ConfigError(name_ + ": missing `" + key + "` in [" + section + "]");
  try {
    std::size_t used = 0;
    double v = std::stod(e->value, &used);
    if (used != e->value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    fail("`" + key + "` is not a number: `" + e->value + "`", e->line);
  }
}

double IniFile::get_double_or(const std::string& section, const std::string& key, double fallback) const {
  return has(section, key) ? get_double(section, key) : fallback;
}

bool IniFile::get_bool_or(const std::string& section, const std::string& key, bool fallback) const {
  const Entry* e = find_entry(section, key);
  if (!e) return fallback;
  if (e->value == "true" || e->value == "1" || e->value == "yes") return true;
  if (e->value == "false" || e->value == "0" || e->value == "no") return false;
  fail("`" + key + "` is not a boolean: `" + e->value + "`", e->line);
}

std::uint64_t IniFile::get_u64_or(const std::string& section, const std::string& key, std::uint64_t fallback) const {
  const Entry* e = find_entry(section, key);
  if (!e) return fallback;
  try {
    std::size_t used = 0;
    unsigned long long v = std::stoull(e->value, &used);
    if (used != e->value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    fail("`" + key + "` is not an unsigned integer: `" + e->value + "`", e->line);
  }
}

int IniFile::line_of(const std::string& section, const std::string& key) const {
  const Entry* e = find_entry(section, key);
  return e ? e->line : 0;
}

std::vector<std::string> split_list(std::string_view value) {
  std::vector<std::string> items;
  std::size_t pos = 0;
  while (pos <= value.size()) {
    std::size_t comma = value.find(',', pos);
    std::string_view piece = value.substr(pos, comma == std::string_view::npos ? value.size() - pos : comma - pos);
    std::string item = trim(piece);
    if (!item.empty()) items.push_back(item);
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return items;
}

void IniWriter::section(const std::string& name) {
  if (!first_section_) out_ += "\n";
  first_section_ = false;
  out_ += "[" + name + "]\n";
}

void IniWriter::kv(const std::string& key, const std::string& value) { out_ += key + " = " + value + "\n"; }
void IniWriter::kv(const std::string& key, long long value) { kv(key, std::to_string(value)); }
void IniWriter::kv(const std::string& key, std::uint64_t value) { kv(key, std::to_string(value)); }
void IniWriter::kv(const std::string& key, int value) { kv(key, std::to_string(static_cast<long long>(value))); }

void IniWriter::kv(const std::string& key, double value, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", precision, value);
  kv(key, std::string(buf));
}

void IniWriter::write(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open file for writing: " + path);
  out << out_;
  if (!out) throw ConfigError("write failed: " + path);
}

}  // namespace minimt
