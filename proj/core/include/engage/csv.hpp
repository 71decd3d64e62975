#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace engage::csv {

/// Splits one unquoted CSV line; a trailing '\r' is dropped.
std::vector<std::string_view> split_line(std::string_view line);

double parse_double(std::string_view field, std::size_t row, std::string_view column);
std::int64_t parse_int(std::string_view field, std::size_t row, std::string_view column);

/// Shortest text that round-trips to the same double.
std::string format_double(double value);

}  // namespace engage::csv
