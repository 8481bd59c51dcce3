#pragma once

#include <filesystem>
#include <string>

namespace hgt {

// Whole-file read; IoError when the file cannot be opened.
std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temporary file and renames it into place, so readers
// never observe a partial file. Creates parent directories.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

}  // namespace hgt
