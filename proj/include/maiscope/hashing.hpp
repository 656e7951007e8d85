#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace maiscope {

// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::span<const std::uint8_t> data);
std::string sha256_hex(std::string_view data);

bool is_sha256_hex(std::string_view s) noexcept;

}  // namespace maiscope
