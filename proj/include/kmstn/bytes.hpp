#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace kmstn {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

/// RFC 4648 base64 with padding.
std::string base64_encode(ByteView data);
/// Strict decoder: rejects bad alphabet, bad padding and non-canonical lengths.
Bytes base64_decode(std::string_view text);

std::string hex_encode(ByteView data);
Bytes hex_decode(std::string_view text);

Bytes to_bytes(std::string_view s);
std::string to_string(ByteView b);

/// Zeroes memory in a way the optimizer cannot elide.
void secure_zero(void* data, std::size_t len) noexcept;
inline void secure_zero(Bytes& b) noexcept { secure_zero(b.data(), b.size()); }
template <std::size_t N>
void secure_zero(std::array<std::uint8_t, N>& a) noexcept {
    secure_zero(a.data(), N);
}

/// Constant-time equality for equal-length inputs.
bool ct_equal(ByteView a, ByteView b) noexcept;

/// True if `needle` occurs anywhere in `haystack`.
bool contains_subsequence(ByteView haystack, ByteView needle);

}  // namespace kmstn
