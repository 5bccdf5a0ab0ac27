// Line-oriented `[section]` / `key = value` files: the one format used by
// corpus manifests, experiment configs, run manifests and reports.
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace minimt {

class IniFile {
 public:
  static IniFile parse_file(const std::string& path);
  static IniFile parse_string(std::string_view text, const std::string& name = "<string>");

  const std::string& name() const { return name_; }

  // Section and key order follow the file.
  std::vector<std::string> sections() const;
  bool has_section(const std::string& section) const;
  std::vector<std::string> keys(const std::string& section) const;
  bool has(const std::string& section, const std::string& key) const;

  // Missing section/key throws ConfigError naming the file and section.
  std::string get(const std::string& section, const std::string& key) const;
  std::string get_or(const std::string& section, const std::string& key, const std::string& fallback) const;

  // Typed accessors throw ConfigError with the file line on parse failure.
  long long get_int(const std::string& section, const std::string& key) const;
  long long get_int_or(const std::string& section, const std::string& key, long long fallback) const;
  double get_double(const std::string& section, const std::string& key) const;
  double get_double_or(const std::string& section, const std::string& key, double fallback) const;
  bool get_bool_or(const std::string& section, const std::string& key, bool fallback) const;
  std::uint64_t get_u64_or(const std::string& section, const std::string& key, std::uint64_t fallback) const;

  // 1-based line of a key, 0 if absent.
  int line_of(const std::string& section, const std::string& key) const;

 private:
  struct Entry {
    std::string value;
    int line = 0;
  };
  struct Section {
    std::string name;
    int line = 0;
    std::vector<std::string> key_order;
    std::map<std::string, Entry> entries;
  };

  const Section* find_section(const std::string& section) const;
  const Entry* find_entry(const std::string& section, const std::string& key) const;
  [[noreturn]] void fail(const std::string& msg, int line) const;

  std::string name_;
  std::vector<Section> sections_;
};

// Trimmed comma-separated items; empty input gives an empty list.
std::vector<std::string> split_list(std::string_view value);

// Stable `key = value` serializer for manifests and reports.
class IniWriter {
 public:
  void section(const std::string& name);
  void kv(const std::string& key, const std::string& value);
  void kv(const std::string& key, long long value);
  void kv(const std::string& key, std::uint64_t value);
  void kv(const std::string& key, int value);
  void kv(const std::string& key, double value, int precision = 6);
  const std::string& str() const { return out_; }
  void write(const std::string& path) const;

 private:
  std::string out_;
  bool first_section_ = true;
};

}  // namespace minimt
