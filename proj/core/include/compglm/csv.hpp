#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace compglm::csv {

using Row = std::vector<std::string>;

/// Splits comma-separated text into rows of trimmed cells. Handles CRLF and
/// double-quoted cells (with "" escapes). Blank lines are skipped.
std::vector<Row> parse(std::string_view text);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

/// Parses a full cell as a finite double; returns false otherwise.
bool parse_double(std::string_view cell, double& out);

/// Shortest round-trip decimal representation (std::to_chars); "nan"/"inf"
/// for non-finite values. Locale independent and deterministic.
std::string format_double(double value);

/// Quotes a cell when it contains a comma, quote, or newline.
std::string escape(std::string_view cell);

}  // namespace compglm::csv
