#pragma once

#include <string>
#include <string_view>

namespace crskit {

// Lowercase hex SHA-256 of raw bytes.
std::string sha256_hex(std::string_view bytes);

}  // namespace crskit
