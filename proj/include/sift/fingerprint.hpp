#pragma once

#include <filesystem>
#include <span>
#include <string>

namespace sift {

// "sha256:<hex>" over raw bytes.
std::string sha256_fingerprint(std::span<const std::byte> bytes);
std::string file_fingerprint(const std::filesystem::path& path);

}  // namespace sift
