// Whitespace normalization, word splitting, UTF-8 iteration, line file I/O.
#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace minimt {

// Canonical text form: trimmed, internal whitespace runs collapsed to one space.
std::string normalize_whitespace(std::string_view s);

std::vector<std::string> split_words(std::string_view s);

std::string join_words(const std::vector<std::string>& words);

// Splits into UTF-8 codepoint substrings; a malformed byte becomes its own entry.
std::vector<std::string> utf8_codepoints(std::string_view s);

// One sentence per line, LF endings. read_lines tolerates a trailing CR per line.
std::vector<std::string> read_lines(const std::string& path);
void write_lines(const std::string& path, const std::vector<std::string>& lines);

}  // namespace minimt
