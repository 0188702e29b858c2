#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace cdppo {

std::string sha1_hex(std::string_view bytes);

/// Content hash in git's blob form: sha1("blob <size>\0" + content).
std::string git_blob_hash(std::string_view content);
std::string git_blob_hash_file(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
/// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace cdppo
