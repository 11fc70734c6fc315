#include <gtest/gtest.h>

#include <set>

#include "kmstn/bytes.hpp"
#include "kmstn/crypto.hpp"
#include "kmstn/error.hpp"
#include "kmstn/mlkem.hpp"

using namespace kmstn;

namespace {

// Generated offline with the RustCrypto ml-kem crate (deterministic keygen
// and encapsulation). Columns: parameter set, vector index, SHA3-256(ek),
// SHA3-256(dk), SHA3-256(ct), shared secret, implicit-rejection secret for
// ct with its first byte XOR 1.
struct Vector {
    const char* set;
    int index;
    const char* ek_hash;
    const char* dk_hash;
    const char* ct_hash;
    const char* shared_secret;
    const char* rejection_secret;
};

const Vector k_vectors[] = {
#include "data/mlkem_vectors.inc"
};

mlkem::Seed pattern(int mul, int add) {
    mlkem::Seed s{};
    for (int j = 0; j < 32; ++j) s[static_cast<std::size_t>(j)] = static_cast<std::uint8_t>(j * mul + add);
    return s;
}

}  // namespace

TEST(MlKem, MatchesReferenceVectors) {
    for (const auto& v : k_vectors) {
        SCOPED_TRACE(std::string(v.set) + "/" + std::to_string(v.index));
        const auto set = *mlkem::parse_parameter_set(v.set);
        const auto d = pattern(7, v.index);
        const auto z = pattern(13, v.index + 1);
        const auto m = pattern(29, v.index + 2);

        const auto kp = mlkem::keygen_deterministic(set, d, z);
        EXPECT_EQ(hex_encode(crypto::sha3_256(kp.encapsulation_key)), v.ek_hash);
        EXPECT_EQ(hex_encode(crypto::sha3_256(kp.decapsulation_key)), v.dk_hash);

        const auto enc = mlkem::encapsulate_deterministic(set, kp.encapsulation_key, m);
        EXPECT_EQ(hex_encode(crypto::sha3_256(enc.ciphertext)), v.ct_hash);
        EXPECT_EQ(hex_encode(enc.shared_secret), v.shared_secret);

        EXPECT_EQ(hex_encode(mlkem::decapsulate(set, kp.decapsulation_key, enc.ciphertext)),
                  v.shared_secret);

        Bytes tampered = enc.ciphertext;
        tampered[0] ^= 1;
        EXPECT_EQ(hex_encode(mlkem::decapsulate(set, kp.decapsulation_key, tampered)),
                  v.rejection_secret);
    }
}

TEST(MlKem, SizesFollowParameterSet) {
    const auto& p = mlkem::params(mlkem::ParameterSet::ml_kem_768);
    EXPECT_EQ(p.encapsulation_key_size(), 1184u);
    EXPECT_EQ(p.decapsulation_key_size(), 2400u);
    EXPECT_EQ(p.ciphertext_size(), 1088u);
    EXPECT_EQ(mlkem::params(mlkem::ParameterSet::ml_kem_512).ciphertext_size(), 768u);
    EXPECT_EQ(mlkem::params(mlkem::ParameterSet::ml_kem_1024).encapsulation_key_size(), 1568u);
}

TEST(MlKem, RandomRoundTripsAgreeAndKeysAreFresh) {
    std::set<Bytes> public_keys;
    for (auto set : {mlkem::ParameterSet::ml_kem_512, mlkem::ParameterSet::ml_kem_768,
                     mlkem::ParameterSet::ml_kem_1024}) {
        for (int i = 0; i < 10; ++i) {
            const auto kp = mlkem::keygen(set);
            EXPECT_TRUE(public_keys.insert(kp.encapsulation_key).second);
            const auto enc = mlkem::encapsulate(set, kp.encapsulation_key);
            EXPECT_EQ(mlkem::decapsulate(set, kp.decapsulation_key, enc.ciphertext),
                      enc.shared_secret);
        }
    }
}

TEST(MlKem, RejectsNonCanonicalEncapsulationKey) {
    const auto set = mlkem::ParameterSet::ml_kem_768;
    auto kp = mlkem::keygen(set);
    EXPECT_TRUE(mlkem::encapsulation_key_is_valid(set, kp.encapsulation_key));
    // First coefficient forced to 4095 (>= q).
    kp.encapsulation_key[0] = 0xff;
    kp.encapsulation_key[1] |= 0x0f;
    EXPECT_FALSE(mlkem::encapsulation_key_is_valid(set, kp.encapsulation_key));
    EXPECT_THROW(mlkem::encapsulate(set, kp.encapsulation_key), Error);

    Bytes short_key(100);
    EXPECT_FALSE(mlkem::encapsulation_key_is_valid(set, short_key));
}

TEST(MlKem, WrongLengthCiphertextThrows) {
    const auto set = mlkem::ParameterSet::ml_kem_512;
    const auto kp = mlkem::keygen(set);
    EXPECT_THROW(mlkem::decapsulate(set, kp.decapsulation_key, Bytes(10)), Error);
}
