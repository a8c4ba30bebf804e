#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace crm::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Index of a header column, or throws parse_error.
  std::size_t column(std::string_view name) const;
};

// Comma-separated, no quoting; surrounding spaces are trimmed per field.
Table read(const std::filesystem::path& path);
Table parse(std::string_view text);

std::vector<std::string> split(std::string_view line, char sep = ',');
std::string_view trim(std::string_view s);

// Shortest decimal text that reads back to the identical double.
std::string format(double v);

double to_double(std::string_view field);
long long to_int(std::string_view field);

void write_text(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);

}  // namespace crm::csv
