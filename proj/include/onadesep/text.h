#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace onadesep {

// Shortest round-trip decimal form of a double.
std::string format_double(double v);
// Fixed six-decimal form used in CSV outputs.
std::string format_fixed(double v, int decimals = 6);

int parse_int(std::string_view key, std::string_view value);
std::int64_t parse_int64(std::string_view key, std::string_view value);
std::uint64_t parse_uint64(std::string_view key, std::string_view value);
double parse_double(std::string_view key, std::string_view value);
bool parse_bool(std::string_view key, std::string_view value);
std::vector<std::string> split(std::string_view text, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
std::string trim(std::string_view text);

// Parses "key=value" lines. Blank lines and lines starting with '#' are
// skipped; duplicate keys are an error.
std::map<std::string, std::string> parse_key_values(std::string_view text);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace onadesep
