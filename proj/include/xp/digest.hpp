#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "xp/value.hpp"

namespace xp {

/// Lowercase hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);

/// Lowercase hex SHA-256 of a file's content. Throws XpError(IoError).
std::string file_digest(const std::filesystem::path& path);

/// UTF-8 JSON, keys sorted lexicographically, no insignificant whitespace.
inline std::string canonical_json(const json& j) {
  return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

}  // namespace xp
