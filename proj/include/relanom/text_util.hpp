#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace relanom::text {

bool is_valid_utf8(std::string_view s);

std::vector<std::string> split(std::string_view s, char sep);
std::string_view trim(std::string_view s);
bool has_outer_whitespace(std::string_view s);
std::string ascii_lower(std::string_view s);

/// Shortest decimal form that reads back to the same double ("inf" for +infinity).
std::string format_double(double v);
std::optional<double> parse_double(std::string_view s);
std::optional<long long> parse_int(std::string_view s);

/// Backslash escaping for single-line tab-delimited fields (\\, \t, \n, \r).
std::string escape_field(std::string_view s);
std::string unescape_field(std::string_view s);

}  // namespace relanom::text
