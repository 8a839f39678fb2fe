#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace tpc::text {

// Decodes UTF-8 into code points. Invalid bytes decode to U+FFFD.
std::u32string decode_utf8(std::string_view s);
std::string encode_utf8(std::u32string_view s);

// Lowercases ASCII, Latin-1 Supplement, Latin Extended-A and basic Greek and
// Cyrillic capitals. Everything else passes through.
char32_t to_lower(char32_t c);
std::string to_lower(std::string_view s);
bool has_upper(std::string_view s);
bool has_digit(std::string_view s);

// Character-level edit distance over code points (unit costs).
std::size_t levenshtein(std::string_view a, std::string_view b);

std::vector<std::string> split(std::string_view s, char sep);
std::vector<std::string> split_ws(std::string_view s);
std::string_view trim(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

// FNV-1a 64-bit, hex encoded; used for resource and config checksums.
std::string fnv1a_hex(std::string_view data);
std::string file_checksum(const std::string& path);
std::string read_file(const std::string& path);

}  // namespace tpc::text
