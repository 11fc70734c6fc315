#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string_view>

#include "kmstn/bytes.hpp"

// ML-KEM (FIPS 203) key encapsulation. Plain reference arithmetic (no
// Montgomery/Barrett tricks); fast enough for one exchange per relayed message.
namespace kmstn::mlkem {

enum class ParameterSet { ml_kem_512, ml_kem_768, ml_kem_1024 };

inline constexpr std::size_t shared_secret_size = 32;
inline constexpr std::size_t seed_size = 32;

using SharedSecret = std::array<std::uint8_t, shared_secret_size>;
using Seed = std::array<std::uint8_t, seed_size>;

struct Params {
    ParameterSet set;
    int k;
    int eta1;
    int eta2;
    int du;
    int dv;

    std::size_t encapsulation_key_size() const { return 384 * static_cast<std::size_t>(k) + 32; }
    std::size_t decapsulation_key_size() const { return 768 * static_cast<std::size_t>(k) + 96; }
    std::size_t ciphertext_size() const {
        return 32 * (static_cast<std::size_t>(du) * static_cast<std::size_t>(k) +
                     static_cast<std::size_t>(dv));
    }
};

const Params& params(ParameterSet set);
std::string_view name(ParameterSet set);
/// Accepts "512"/"768"/"1024" and "ML-KEM-768" style names.
std::optional<ParameterSet> parse_parameter_set(std::string_view text);

struct KeyPair {
    Bytes encapsulation_key;
    Bytes decapsulation_key;
};

struct Encapsulation {
    Bytes ciphertext;
    SharedSecret shared_secret;
};

KeyPair keygen(ParameterSet set);
KeyPair keygen_deterministic(ParameterSet set, const Seed& d, const Seed& z);

/// Throws Error(Errc::protocol) when the encapsulation key fails the
/// length or modulus check.
Encapsulation encapsulate(ParameterSet set, ByteView encapsulation_key);
Encapsulation encapsulate_deterministic(ParameterSet set, ByteView encapsulation_key,
                                        const Seed& m);

/// Implicit rejection: a well-formed but tampered ciphertext yields a
/// pseudorandom secret rather than an error. Malformed lengths throw.
SharedSecret decapsulate(ParameterSet set, ByteView decapsulation_key, ByteView ciphertext);

/// FIPS 203 encapsulation-key input check (length and canonical coefficients).
bool encapsulation_key_is_valid(ParameterSet set, ByteView encapsulation_key);

}  // namespace kmstn::mlkem
