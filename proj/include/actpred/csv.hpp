#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace actpred {

/// Shortest round-trip decimal form of a double.
std::string format_double(double value);
/// Empty field for a missing value.
std::string format_optional(const std::optional<double>& value);

/// Splits one CSV line on commas. Quoting is not supported; none of the
/// formats read here contain embedded commas.
std::vector<std::string> split_csv_line(std::string_view line);

/// Strict numeric field parsers; the record text goes into the error message.
std::int64_t parse_int(std::string_view field, std::string_view record);
double parse_double(std::string_view field, std::string_view record);

/// 64-bit FNV-1a, used for manifest digests.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t hash = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);

}  // namespace actpred
