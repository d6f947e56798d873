#pragma once

#include <filesystem>
#include <string>

namespace actirisk {

// Hex-encoded SHA-256 digests (OpenSSL-backed), used for manifest integrity.
std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

} // namespace actirisk
