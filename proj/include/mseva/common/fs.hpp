#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace mseva {

std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temp file, fsyncs, then renames over `path`, so readers
// never observe a partially written document.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file_hex(const std::filesystem::path& path);

}  // namespace mseva
