#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace halbach {

/// Shortest decimal representation that round-trips to the same double.
std::string format_double(double v);

/// Parses a full field as a double; throws DomainError naming `what` on failure.
double parse_double(std::string_view field, std::string_view what);
long parse_int(std::string_view field, std::string_view what);

/// Splits one CSV line on commas, trimming surrounding whitespace and any trailing CR.
std::vector<std::string> split_csv_line(std::string_view line);

}  // namespace halbach
