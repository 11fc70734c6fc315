#include "kmstn/secure_envelope.hpp"

#include "kmstn/crypto.hpp"
#include "kmstn/error.hpp"

namespace kmstn::secure_envelope {

namespace {

Bytes associated_data(const std::string& session, const std::optional<SaeId>& sae) {
    std::string aad = "kmstn-envelope/v1|" + session + "|";
    if (sae) aad += sae->str();
    return to_bytes(aad);
}

MessageKey to_key(const Bytes& okm) {
    MessageKey key{};
    std::copy(okm.begin(), okm.begin() + static_cast<std::ptrdiff_t>(key.size()), key.begin());
    return key;
}

}  // namespace

Bytes otp_combine(ByteView k_ab, ByteView kem_ab) {
    if (k_ab.empty() || kem_ab.empty()) fail(Errc::empty_input, "OTP operands must be non-empty");
    Bytes pad;
    if (kem_ab.size() == k_ab.size()) {
        pad.assign(kem_ab.begin(), kem_ab.end());
    } else {
        pad = crypto::hkdf_sha256(kem_ab, {}, to_bytes("kmstn/otp-expand"), k_ab.size());
    }
    Bytes out(k_ab.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = k_ab[i] ^ pad[i];
    secure_zero(pad);
    return out;
}

MessageKey derive_message_key(const MessageKeyMode& mode) {
    if (mode.mode == KeyMode::pqc_only) {
        Bytes okm = crypto::hkdf_sha256(mode.kem_secret, {}, to_bytes("pqc-only"), 32);
        MessageKey key = to_key(okm);
        secure_zero(okm);
        return key;
    }
    if (!mode.qkd_key) fail(Errc::invariant, "hybrid message key requires a QKD key");
    Bytes combined = otp_combine(mode.qkd_key->key_material, mode.kem_secret);
    Bytes okm = crypto::hkdf_sha256(combined, {}, to_bytes("hybrid"), 32);
    MessageKey key = to_key(okm);
    secure_zero(combined);
    secure_zero(okm);
    return key;
}

EncryptedEnvelope seal(ByteView plaintext, const MessageKey& key, std::string session,
                       std::optional<SaeId> sae) {
    EncryptedEnvelope env;
    env.iv = crypto::random_bytes(envelope_iv_size);
    env.ciphertext = crypto::aes256_gcm_encrypt(key, env.iv, plaintext, associated_data(session, sae));
    env.session = std::move(session);
    env.sae = std::move(sae);
    return env;
}

Bytes open(const EncryptedEnvelope& envelope, const MessageKey& key) {
    if (envelope.iv.size() != envelope_iv_size) fail(Errc::auth_failure, "bad envelope iv length");
    return crypto::aes256_gcm_decrypt(key, envelope.iv, envelope.ciphertext,
                                      associated_data(envelope.session, envelope.sae));
}

}  // namespace kmstn::secure_envelope
