// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace clsbench {

using CsvRows = std::vector<std::vector<std::string>>;

/// RFC 4180 quoting: fields containing comma, quote or newline are quoted.
std::string csv_escape(std::string_view field);
std::string to_csv(const CsvRows& rows);
CsvRows parse_csv(std::string_view text);

void write_csv(const std::filesystem::path& path, const CsvRows& rows);
CsvRows read_csv(const std::filesystem::path& path);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);
double parse_double(std::string_view text);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace clsbench
