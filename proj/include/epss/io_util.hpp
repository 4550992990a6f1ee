#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace epss {

std::string read_file(const std::filesystem::path& path);

/// Writes content to a temp file next to the target, then renames into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

/// FNV-1a 64 over the file bytes, as a 16-hex-digit string.
std::string file_digest(const std::filesystem::path& path);

/// Hex form of a 64-bit hash.
std::string hex64(std::uint64_t h);

/// Splits content into lines (without terminators). A trailing newline does
/// not produce an empty final line.
std::vector<std::string> split_lines(const std::string& content);

}  // namespace epss
