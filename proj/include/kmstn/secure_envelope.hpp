#pragma once

#include <array>
#include <optional>
#include <string>

#include "kmstn/bytes.hpp"
#include "kmstn/model.hpp"

// Application-level encryption above HTTPS for every KMS-to-KMS message.
//
// Wire layout: iv is a fresh 12-byte random nonce; ciphertext is
// AES-256-GCM(plaintext) with the 16-byte tag appended. The associated data
// is the ASCII string "kmstn-envelope/v1|<session>|<sae or empty>", so
// session and sae travel in the clear but cannot be swapped.
namespace kmstn::secure_envelope {

using MessageKey = std::array<std::uint8_t, 32>;
using KemSecret = std::array<std::uint8_t, 32>;

enum class KeyMode { pqc_only, hybrid };

struct MessageKeyMode {
    KeyMode mode = KeyMode::pqc_only;
    KemSecret kem_secret{};
    /// Required iff mode == hybrid.
    std::optional<KeyBlock> qkd_key;
};

/// k_ab XOR kem_ab. When the lengths differ, kem_ab is first stretched to
/// len(k_ab) with HKDF-SHA256 (info "kmstn/otp-expand").
/// Throws Error(Errc::empty_input) when either input is empty.
Bytes otp_combine(ByteView k_ab, ByteView kem_ab);

/// pqc_only: HKDF(kem_secret, info "pqc-only").
/// hybrid:   HKDF(otp_combine(qkd_key, kem_secret), info "hybrid").
MessageKey derive_message_key(const MessageKeyMode& mode);

EncryptedEnvelope seal(ByteView plaintext, const MessageKey& key, std::string session,
                       std::optional<SaeId> sae = std::nullopt);

/// Throws Error(Errc::auth_failure) on a wrong key or any tampering.
Bytes open(const EncryptedEnvelope& envelope, const MessageKey& key);

}  // namespace kmstn::secure_envelope
