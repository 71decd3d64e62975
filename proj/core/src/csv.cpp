#include "engage/csv.hpp"

#include <charconv>
#include <cmath>

#include "engage/types.hpp"

namespace engage::csv {

std::vector<std::string_view> split_line(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

namespace {

std::string where(std::size_t row, std::string_view column) {
  return "row " + std::to_string(row) + ", column '" + std::string(column) + "'";
}

}  // namespace

double parse_double(std::string_view field, std::size_t row, std::string_view column) {
  double value = 0.0;
  const auto* first = field.data();
  const auto* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw Error(ErrorKind::parse, "invalid number '" + std::string(field) + "' at " + where(row, column));
  }
  if (!std::isfinite(value)) {
    throw Error(ErrorKind::parse, "non-finite value at " + where(row, column));
  }
  return value;
}

std::int64_t parse_int(std::string_view field, std::size_t row, std::string_view column) {
  std::int64_t value = 0;
  const auto* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), last, value);
  if (ec != std::errc() || ptr != last) {
    throw Error(ErrorKind::parse, "invalid integer '" + std::string(field) + "' at " + where(row, column));
  }
  return value;
}

std::string format_double(double value) {
  char buffer[64];
  auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
  (void)ec;
  return std::string(buffer, ptr);
}

}  // namespace engage::csv
