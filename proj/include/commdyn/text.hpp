#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace commdyn::text {

/// Shortest representation that parses back to the same double.
std::string format_number(double value);

std::optional<double> parse_double(std::string_view token);
std::optional<long long> parse_integer(std::string_view token);

std::string_view trim(std::string_view s);

/// Splits on a single delimiter character, keeping empty fields.
std::vector<std::string_view> split(std::string_view s, char delimiter);

/// Splits on runs of blanks (space, tab, CR).
std::vector<std::string_view> split_whitespace(std::string_view s);

}  // namespace commdyn::text
