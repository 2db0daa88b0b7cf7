#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace cdrdemo::io {

// Splits one CSV line on commas. No quoting: none of the formats handled
// here carry embedded commas.
std::vector<std::string_view> split_fields(std::string_view line, char sep = ',');

std::string_view trim(std::string_view s);

// Calls `row` for every non-empty, non-comment line after the header.
// `row` receives the split fields and the 1-based line number. When
// `expect_header` is non-empty, the first line must match it exactly.
void for_each_row(std::istream& in, std::string_view expect_header,
                  const std::function<void(const std::vector<std::string_view>&,
                                           std::size_t)>& row);

double parse_double(std::string_view s, std::size_t line);
long long parse_int(std::string_view s, std::size_t line);

// Shortest round-trip formatting; deterministic for a given value.
std::string format_double(double v);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

// Hex SHA-256 of a byte string / file contents.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace cdrdemo::io
