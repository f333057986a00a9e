#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>

namespace onadesep {

// Hex-encoded SHA-256 digests, used for checkpoint integrity fields.
std::string sha256_hex(std::span<const std::byte> data);
std::string sha256_hex(std::string_view text);

}  // namespace onadesep
