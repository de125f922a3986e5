#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cape::csv {

/// Shortest-roundtrip-safe decimal text with 17 significant digits.
std::string format_double(double value);
/// Empty string for nullopt or NaN, otherwise format_double.
std::string format_optional(std::optional<double> value);

/// Splits one CSV line on commas. Quoting is not supported; fields are
/// trimmed of surrounding whitespace and a trailing '\r'.
std::vector<std::string> split_line(std::string_view line);

/// Strict parse of a full field; nullopt on any trailing garbage.
std::optional<double> parse_double(std::string_view field);
std::optional<long long> parse_integer(std::string_view field);

/// Whole-file helpers; IoError on failure.
void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

}  // namespace cape::csv
