#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace mlc {

/// 64-bit FNV-1a, rendered as 16 lowercase hex digits.
std::string fnv1a_hex(std::span<const unsigned char> bytes);
std::string fnv1a_hex(std::string_view text);
/// Checksum of the little-endian IEEE-754 bytes of `values`.
std::string fnv1a_hex(std::span<const double> values);

}  // namespace mlc
