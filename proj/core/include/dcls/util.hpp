#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace dcls {

// Lowercase ASCII, split on runs of whitespace.
std::vector<std::string> split_words(std::string_view text);

// Levenshtein distance over word tokens, normalized by the longer length.
// 0 for two empty sequences.
double normalized_edit_distance(const std::vector<std::string>& a,
                                const std::vector<std::string>& b);
double normalized_edit_distance(std::string_view a, std::string_view b);

// Write-temp-then-rename so partially written outputs are never observed.
void atomic_write_file(const std::filesystem::path& path, std::string_view content);

std::string read_file(const std::filesystem::path& path);

// Fixed-precision decimal formatting (CSV cells); locale-independent.
std::string format_fixed(double v, int digits);

} // namespace dcls
