#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace ape::fsutil {

/// Writes to a sibling temp file then renames over `path`, so readers never
/// observe a partial file.
void atomic_write(const std::filesystem::path& path, std::string_view bytes);

std::string read_file(const std::filesystem::path& path);

}  // namespace ape::fsutil
