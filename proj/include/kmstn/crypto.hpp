#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>

#include "kmstn/bytes.hpp"

// Thin wrappers over libcrypto. Everything here throws kmstn::Error on
// library failure; authentication failures surface as Errc::auth_failure.
namespace kmstn::crypto {

inline constexpr std::size_t aes256_key_size = 32;
inline constexpr std::size_t gcm_nonce_size = 12;
inline constexpr std::size_t gcm_tag_size = 16;

void random_bytes(std::span<std::uint8_t> out);
Bytes random_bytes(std::size_t n);

/// Random RFC 4122 version 4 UUID, lowercase.
std::string uuid_v4();
/// Formats 16 bytes as a version 4 UUID (version/variant bits are forced).
std::string uuid_v4_from(std::span<const std::uint8_t, 16> raw);
bool is_uuid(std::string_view s);

std::array<std::uint8_t, 32> sha256(ByteView data);
std::array<std::uint8_t, 32> sha3_256(ByteView data);
std::array<std::uint8_t, 64> sha3_512(ByteView data);
Bytes shake128(ByteView data, std::size_t out_len);
Bytes shake256(ByteView data, std::size_t out_len);

std::array<std::uint8_t, 32> hmac_sha256(ByteView key, ByteView data);

/// RFC 5869 extract-and-expand with SHA-256.
Bytes hkdf_sha256(ByteView ikm, ByteView salt, ByteView info, std::size_t out_len);

/// PBKDF2-HMAC-SHA256 for password-derived keys.
Bytes pbkdf2_sha256(std::string_view password, ByteView salt, unsigned iterations, std::size_t out_len);

/// AES-256-GCM. The returned ciphertext carries the 16-byte tag appended.
Bytes aes256_gcm_encrypt(ByteView key, ByteView nonce, ByteView plaintext, ByteView aad = {});
/// Throws Error(Errc::auth_failure) when the tag does not verify.
Bytes aes256_gcm_decrypt(ByteView key, ByteView nonce, ByteView ciphertext_and_tag,
                         ByteView aad = {});

}  // namespace kmstn::crypto
