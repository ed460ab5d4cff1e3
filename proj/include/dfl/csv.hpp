#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace dfl::csv {

/// Splits one CSV record on commas. Double-quoted fields may contain commas;
/// a doubled quote inside a quoted field is a literal quote.
std::vector<std::string> split_record(std::string_view line);

/// Reads all non-empty lines of a text file (CR stripped). Throws
/// std::runtime_error if the file cannot be opened.
std::vector<std::string> read_lines(const std::filesystem::path& path);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, std::string_view text);

/// Parses a finite double; returns false on trailing garbage or non-finite values.
bool parse_double(std::string_view text, double& out);

std::string trim(std::string_view s);

} // namespace dfl::csv
