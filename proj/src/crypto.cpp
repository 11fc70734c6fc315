#include "kmstn/crypto.hpp"

#include <memory>

#include <openssl/core_names.h>
#include <openssl/evp.h>
#include <openssl/hmac.h>
#include <openssl/kdf.h>
#include <openssl/rand.h>

#include "kmstn/error.hpp"

namespace kmstn::crypto {

namespace {

struct MdCtxFree {
    void operator()(EVP_MD_CTX* p) const { EVP_MD_CTX_free(p); }
};
struct CipherCtxFree {
    void operator()(EVP_CIPHER_CTX* p) const { EVP_CIPHER_CTX_free(p); }
};
struct KdfFree {
    void operator()(EVP_KDF* p) const { EVP_KDF_free(p); }
};
struct KdfCtxFree {
    void operator()(EVP_KDF_CTX* p) const { EVP_KDF_CTX_free(p); }
};

[[noreturn]] void libcrypto_failure(const char* what) {
    fail(Errc::internal, std::string("libcrypto failure: ") + what);
}

void digest_into(const EVP_MD* md, ByteView data, std::uint8_t* out, std::size_t out_len,
                 bool xof) {
    std::unique_ptr<EVP_MD_CTX, MdCtxFree> ctx(EVP_MD_CTX_new());
    if (!ctx || EVP_DigestInit_ex(ctx.get(), md, nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), data.data(), data.size()) != 1) {
        libcrypto_failure("digest");
    }
    if (xof) {
        if (EVP_DigestFinalXOF(ctx.get(), out, out_len) != 1) libcrypto_failure("xof");
    } else {
        unsigned int n = 0;
        if (EVP_DigestFinal_ex(ctx.get(), out, &n) != 1 || n != out_len) libcrypto_failure("final");
    }
}

}  // namespace

void random_bytes(std::span<std::uint8_t> out) {
    if (out.empty()) return;
    if (RAND_bytes(out.data(), static_cast<int>(out.size())) != 1) libcrypto_failure("RAND_bytes");
}

Bytes random_bytes(std::size_t n) {
    Bytes out(n);
    random_bytes(out);
    return out;
}

std::string uuid_v4_from(std::span<const std::uint8_t, 16> raw) {
    std::array<std::uint8_t, 16> b{};
    std::copy(raw.begin(), raw.end(), b.begin());
    b[6] = static_cast<std::uint8_t>((b[6] & 0x0f) | 0x40);
    b[8] = static_cast<std::uint8_t>((b[8] & 0x3f) | 0x80);
    const std::string h = hex_encode(b);
    return h.substr(0, 8) + "-" + h.substr(8, 4) + "-" + h.substr(12, 4) + "-" + h.substr(16, 4) +
           "-" + h.substr(20, 12);
}

std::string uuid_v4() {
    std::array<std::uint8_t, 16> raw{};
    random_bytes(raw);
    return uuid_v4_from(raw);
}

bool is_uuid(std::string_view s) {
    if (s.size() != 36) return false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const char c = s[i];
        if (i == 8 || i == 13 || i == 18 || i == 23) {
            if (c != '-') return false;
        } else if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f') || (c >= 'A' && c <= 'F'))) {
            return false;
        }
    }
    return true;
}

std::array<std::uint8_t, 32> sha256(ByteView data) {
    std::array<std::uint8_t, 32> out{};
    digest_into(EVP_sha256(), data, out.data(), out.size(), false);
    return out;
}

std::array<std::uint8_t, 32> sha3_256(ByteView data) {
    std::array<std::uint8_t, 32> out{};
    digest_into(EVP_sha3_256(), data, out.data(), out.size(), false);
    return out;
}

std::array<std::uint8_t, 64> sha3_512(ByteView data) {
    std::array<std::uint8_t, 64> out{};
    digest_into(EVP_sha3_512(), data, out.data(), out.size(), false);
    return out;
}

Bytes shake128(ByteView data, std::size_t out_len) {
    Bytes out(out_len);
    digest_into(EVP_shake128(), data, out.data(), out.size(), true);
    return out;
}

Bytes shake256(ByteView data, std::size_t out_len) {
    Bytes out(out_len);
    digest_into(EVP_shake256(), data, out.data(), out.size(), true);
    return out;
}

std::array<std::uint8_t, 32> hmac_sha256(ByteView key, ByteView data) {
    std::array<std::uint8_t, 32> out{};
    unsigned int n = 0;
    static const std::uint8_t empty = 0;
    if (HMAC(EVP_sha256(), key.empty() ? &empty : key.data(), static_cast<int>(key.size()),
             data.empty() ? &empty : data.data(), data.size(), out.data(), &n) == nullptr ||
        n != out.size()) {
        libcrypto_failure("HMAC");
    }
    return out;
}

Bytes hkdf_sha256(ByteView ikm, ByteView salt, ByteView info, std::size_t out_len) {
    std::unique_ptr<EVP_KDF, KdfFree> kdf(EVP_KDF_fetch(nullptr, "HKDF", nullptr));
    if (!kdf) libcrypto_failure("HKDF fetch");
    std::unique_ptr<EVP_KDF_CTX, KdfCtxFree> ctx(EVP_KDF_CTX_new(kdf.get()));
    if (!ctx) libcrypto_failure("HKDF ctx");

    // OpenSSL treats a zero-length buffer parameter as absent; an empty salt
    // is equivalent to HashLen zero bytes per RFC 5869, so pass that.
    static const std::uint8_t zero_salt[32] = {};
    static const std::uint8_t empty = 0;
    char digest[] = "SHA256";
    OSSL_PARAM params[5];
    int i = 0;
    params[i++] = OSSL_PARAM_construct_utf8_string(OSSL_KDF_PARAM_DIGEST, digest, 0);
    params[i++] = OSSL_PARAM_construct_octet_string(
        OSSL_KDF_PARAM_KEY, const_cast<std::uint8_t*>(ikm.empty() ? &empty : ikm.data()),
        ikm.size());
    params[i++] = OSSL_PARAM_construct_octet_string(
        OSSL_KDF_PARAM_SALT,
        const_cast<std::uint8_t*>(salt.empty() ? zero_salt : salt.data()),
        salt.empty() ? sizeof(zero_salt) : salt.size());
    if (!info.empty()) {
        params[i++] = OSSL_PARAM_construct_octet_string(
            OSSL_KDF_PARAM_INFO, const_cast<std::uint8_t*>(info.data()), info.size());
    }
    params[i] = OSSL_PARAM_construct_end();

    Bytes out(out_len);
    if (EVP_KDF_derive(ctx.get(), out.data(), out.size(), params) != 1) {
        libcrypto_failure("HKDF derive");
    }
    return out;
}

Bytes aes256_gcm_encrypt(ByteView key, ByteView nonce, ByteView plaintext, ByteView aad) {
    if (key.size() != aes256_key_size) fail(Errc::invariant, "AES-256 key must be 32 bytes");
    if (nonce.size() != gcm_nonce_size) fail(Errc::invariant, "GCM nonce must be 12 bytes");
    std::unique_ptr<EVP_CIPHER_CTX, CipherCtxFree> ctx(EVP_CIPHER_CTX_new());
    if (!ctx || EVP_EncryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, key.data(),
                                   nonce.data()) != 1) {
        libcrypto_failure("GCM init");
    }
    int len = 0;
    if (!aad.empty() &&
        EVP_EncryptUpdate(ctx.get(), nullptr, &len, aad.data(), static_cast<int>(aad.size())) != 1) {
        libcrypto_failure("GCM aad");
    }
    Bytes out(plaintext.size() + gcm_tag_size);
    int total = 0;
    if (!plaintext.empty()) {
        if (EVP_EncryptUpdate(ctx.get(), out.data(), &len, plaintext.data(),
                              static_cast<int>(plaintext.size())) != 1) {
            libcrypto_failure("GCM update");
        }
        total = len;
    }
    if (EVP_EncryptFinal_ex(ctx.get(), out.data() + total, &len) != 1) libcrypto_failure("GCM final");
    total += len;
    if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_GET_TAG, gcm_tag_size, out.data() + total) != 1) {
        libcrypto_failure("GCM tag");
    }
    out.resize(static_cast<std::size_t>(total) + gcm_tag_size);
    return out;
}

Bytes aes256_gcm_decrypt(ByteView key, ByteView nonce, ByteView ciphertext_and_tag, ByteView aad) {
    if (key.size() != aes256_key_size) fail(Errc::invariant, "AES-256 key must be 32 bytes");
    if (nonce.size() != gcm_nonce_size) fail(Errc::auth_failure, "bad nonce length");
    if (ciphertext_and_tag.size() < gcm_tag_size) fail(Errc::auth_failure, "ciphertext too short");
    const std::size_t ct_len = ciphertext_and_tag.size() - gcm_tag_size;

    std::unique_ptr<EVP_CIPHER_CTX, CipherCtxFree> ctx(EVP_CIPHER_CTX_new());
    if (!ctx || EVP_DecryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, key.data(),
                                   nonce.data()) != 1) {
        libcrypto_failure("GCM init");
    }
    int len = 0;
    if (!aad.empty() &&
        EVP_DecryptUpdate(ctx.get(), nullptr, &len, aad.data(), static_cast<int>(aad.size())) != 1) {
        libcrypto_failure("GCM aad");
    }
    Bytes out(ct_len + 16);
    int total = 0;
    if (ct_len > 0) {
        if (EVP_DecryptUpdate(ctx.get(), out.data(), &len, ciphertext_and_tag.data(),
                              static_cast<int>(ct_len)) != 1) {
            libcrypto_failure("GCM update");
        }
        total = len;
    }
    std::array<std::uint8_t, gcm_tag_size> tag{};
    std::copy(ciphertext_and_tag.begin() + static_cast<std::ptrdiff_t>(ct_len),
              ciphertext_and_tag.end(), tag.begin());
    if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_TAG, gcm_tag_size, tag.data()) != 1) {
        libcrypto_failure("GCM set tag");
    }
    if (EVP_DecryptFinal_ex(ctx.get(), out.data() + total, &len) != 1) {
        secure_zero(out);
        fail(Errc::auth_failure, "authenticated decryption failed");
    }
    total += len;
    out.resize(static_cast<std::size_t>(total));
    return out;
}

Bytes pbkdf2_sha256(std::string_view password, ByteView salt, unsigned iterations, std::size_t out_len) {
    Bytes out(out_len);
    if (PKCS5_PBKDF2_HMAC(password.data(), static_cast<int>(password.size()), salt.data(),
                          static_cast<int>(salt.size()), static_cast<int>(iterations), EVP_sha256(),
                          static_cast<int>(out_len), out.data()) != 1) {
        libcrypto_failure("PBKDF2");
    }
    return out;
}

}  // namespace kmstn::crypto
