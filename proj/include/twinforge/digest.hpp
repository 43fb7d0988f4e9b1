#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace twinforge {

/// Lowercase hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);

/// Lowercase hex SHA-256 of a file's bytes. Throws IoError if unreadable.
std::string sha256_file(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);

/// Writes through a temporary sibling and renames, so readers never see a
/// half-written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

}  // namespace twinforge
