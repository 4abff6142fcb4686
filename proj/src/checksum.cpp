#include "mlc/checksum.hpp"

#include <bit>
#include <cstring>
#include <vector>

namespace mlc {

namespace {

constexpr std::uint64_t kOffset = 14695981039346656037ull;
constexpr std::uint64_t kPrime = 1099511628211ull;

std::string hex(std::uint64_t h) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[h & 0xf];
    h >>= 4;
  }
  return out;
}

}  // namespace

std::string fnv1a_hex(std::span<const unsigned char> bytes) {
  std::uint64_t h = kOffset;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= kPrime;
  }
  return hex(h);
}

std::string fnv1a_hex(std::string_view text) {
  return fnv1a_hex(std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

std::string fnv1a_hex(std::span<const double> values) {
  static_assert(std::endian::native == std::endian::little, "checksums assume a little-endian host");
  return fnv1a_hex(
      std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(values.data()), values.size_bytes()));
}

}  // namespace mlc
