#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace cchain {

/// FNV-1a 64-bit content hash, rendered as "fnv1a:<16 hex digits>".
/// Used to stamp output artifacts with the identity of their inputs.
std::string fnv1a_hex(std::string_view bytes);

/// Hash of a file's raw bytes. Throws std::runtime_error if unreadable.
std::string file_hash(const std::filesystem::path& path);

}  // namespace cchain
