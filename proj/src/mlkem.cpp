#include "kmstn/mlkem.hpp"

#include <algorithm>
#include <cstdint>
#include <vector>

#include "kmstn/crypto.hpp"
#include "kmstn/error.hpp"

namespace kmstn::mlkem {

namespace {

constexpr int n = 256;
constexpr std::int32_t q = 3329;

using Poly = std::array<std::int32_t, n>;
using PolyVec = std::vector<Poly>;

constexpr Params k_params[] = {
    {ParameterSet::ml_kem_512, 2, 3, 2, 10, 4},
    {ParameterSet::ml_kem_768, 3, 2, 2, 10, 4},
    {ParameterSet::ml_kem_1024, 4, 2, 2, 11, 5},
};

std::int32_t mod_q(std::int64_t x) {
    std::int64_t r = x % q;
    return static_cast<std::int32_t>(r < 0 ? r + q : r);
}

std::int32_t pow_mod(std::int32_t base, int exp) {
    std::int64_t result = 1;
    std::int64_t b = base;
    while (exp > 0) {
        if (exp & 1) result = (result * b) % q;
        b = (b * b) % q;
        exp >>= 1;
    }
    return static_cast<std::int32_t>(result);
}

int bitrev7(int x) {
    int r = 0;
    for (int i = 0; i < 7; ++i) r |= ((x >> i) & 1) << (6 - i);
    return r;
}

struct Tables {
    std::array<std::int32_t, 128> zetas{};
    std::array<std::int32_t, 128> gammas{};
    Tables() {
        for (int i = 0; i < 128; ++i) {
            zetas[static_cast<std::size_t>(i)] = pow_mod(17, bitrev7(i));
            gammas[static_cast<std::size_t>(i)] = pow_mod(17, 2 * bitrev7(i) + 1);
        }
    }
};

const Tables& tables() {
    static const Tables t;
    return t;
}

void ntt(Poly& f) {
    const auto& z = tables().zetas;
    std::size_t i = 1;
    for (int len = 128; len >= 2; len /= 2) {
        for (int start = 0; start < n; start += 2 * len) {
            const std::int64_t zeta = z[i++];
            for (int j = start; j < start + len; ++j) {
                const std::int32_t t = mod_q(zeta * f[static_cast<std::size_t>(j + len)]);
                f[static_cast<std::size_t>(j + len)] = mod_q(f[static_cast<std::size_t>(j)] - t);
                f[static_cast<std::size_t>(j)] = mod_q(f[static_cast<std::size_t>(j)] + t);
            }
        }
    }
}

void inv_ntt(Poly& f) {
    const auto& z = tables().zetas;
    std::size_t i = 127;
    for (int len = 2; len <= 128; len *= 2) {
        for (int start = 0; start < n; start += 2 * len) {
            const std::int64_t zeta = z[i--];
            for (int j = start; j < start + len; ++j) {
                const std::int32_t t = f[static_cast<std::size_t>(j)];
                f[static_cast<std::size_t>(j)] = mod_q(t + f[static_cast<std::size_t>(j + len)]);
                f[static_cast<std::size_t>(j + len)] =
                    mod_q(zeta * (f[static_cast<std::size_t>(j + len)] - t));
            }
        }
    }
    for (auto& c : f) c = mod_q(static_cast<std::int64_t>(c) * 3303);
}

Poly multiply_ntts(const Poly& f, const Poly& g) {
    const auto& gam = tables().gammas;
    Poly h{};
    for (std::size_t i = 0; i < 128; ++i) {
        const std::int64_t a0 = f[2 * i], a1 = f[2 * i + 1];
        const std::int64_t b0 = g[2 * i], b1 = g[2 * i + 1];
        h[2 * i] = mod_q(a0 * b0 + mod_q(a1 * b1) * static_cast<std::int64_t>(gam[i]));
        h[2 * i + 1] = mod_q(a0 * b1 + a1 * b0);
    }
    return h;
}

void add_into(Poly& acc, const Poly& x) {
    for (std::size_t i = 0; i < n; ++i) acc[i] = mod_q(acc[i] + x[i]);
}

// Coefficients little-endian, d bits each, bits little-endian within bytes.
void byte_encode(const Poly& f, int d, Bytes& out) {
    const std::size_t base = out.size();
    out.resize(base + 32 * static_cast<std::size_t>(d), 0);
    std::size_t bit = 0;
    for (std::size_t i = 0; i < n; ++i) {
        std::uint32_t a = static_cast<std::uint32_t>(f[i]);
        for (int b = 0; b < d; ++b, ++bit) {
            if ((a >> b) & 1u) out[base + bit / 8] |= static_cast<std::uint8_t>(1u << (bit % 8));
        }
    }
}

Poly byte_decode(ByteView in, int d) {
    Poly f{};
    std::size_t bit = 0;
    for (std::size_t i = 0; i < n; ++i) {
        std::uint32_t a = 0;
        for (int b = 0; b < d; ++b, ++bit) {
            a |= static_cast<std::uint32_t>((in[bit / 8] >> (bit % 8)) & 1u) << b;
        }
        f[i] = d == 12 ? static_cast<std::int32_t>(a % q) : static_cast<std::int32_t>(a);
    }
    return f;
}

std::int32_t compress(std::int32_t x, int d) {
    // round(2^d * x / q) mod 2^d, computed as floor((2^(d+1) x + q) / 2q)
    const std::uint64_t num = (static_cast<std::uint64_t>(x) << (d + 1)) + q;
    return static_cast<std::int32_t>((num / (2 * q)) & ((1u << d) - 1));
}

std::int32_t decompress(std::int32_t y, int d) {
    return static_cast<std::int32_t>((static_cast<std::uint64_t>(y) * q + (1u << (d - 1))) >> d);
}

Poly sample_ntt(const Seed& rho, std::uint8_t j, std::uint8_t i) {
    Bytes seed(rho.begin(), rho.end());
    seed.push_back(j);
    seed.push_back(i);
    Poly a{};
    std::size_t filled = 0;
    std::size_t pos = 0;
    std::size_t stream_len = 168 * 5;
    Bytes stream = crypto::shake128(seed, stream_len);
    while (filled < n) {
        if (pos + 3 > stream.size()) {
            // SHAKE output is prefix-stable, so a longer squeeze continues the stream.
            stream_len *= 2;
            stream = crypto::shake128(seed, stream_len);
        }
        const std::int32_t c0 = stream[pos], c1 = stream[pos + 1], c2 = stream[pos + 2];
        pos += 3;
        const std::int32_t d1 = c0 + 256 * (c1 % 16);
        const std::int32_t d2 = c1 / 16 + 16 * c2;
        if (d1 < q) a[filled++] = d1;
        if (d2 < q && filled < n) a[filled++] = d2;
    }
    return a;
}

Poly sample_cbd(ByteView b, int eta) {
    Poly f{};
    auto bit = [&](std::size_t idx) { return (b[idx / 8] >> (idx % 8)) & 1; };
    for (std::size_t i = 0; i < n; ++i) {
        int x = 0, y = 0;
        for (int j = 0; j < eta; ++j) {
            x += bit(2 * i * static_cast<std::size_t>(eta) + static_cast<std::size_t>(j));
            y += bit(2 * i * static_cast<std::size_t>(eta) + static_cast<std::size_t>(eta + j));
        }
        f[i] = mod_q(x - y);
    }
    return f;
}

Bytes prf(int eta, ByteView s, std::uint8_t nonce) {
    Bytes in(s.begin(), s.end());
    in.push_back(nonce);
    return crypto::shake256(in, 64 * static_cast<std::size_t>(eta));
}

std::pair<Seed, Seed> g_hash(ByteView data) {
    const auto h = crypto::sha3_512(data);
    std::pair<Seed, Seed> out;
    std::copy(h.begin(), h.begin() + 32, out.first.begin());
    std::copy(h.begin() + 32, h.end(), out.second.begin());
    return out;
}

// Matrix entry A[i][j] = SampleNTT(rho || j || i).
std::vector<PolyVec> expand_matrix(const Params& p, const Seed& rho) {
    std::vector<PolyVec> a(static_cast<std::size_t>(p.k), PolyVec(static_cast<std::size_t>(p.k)));
    for (int i = 0; i < p.k; ++i) {
        for (int j = 0; j < p.k; ++j) {
            a[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
                sample_ntt(rho, static_cast<std::uint8_t>(j), static_cast<std::uint8_t>(i));
        }
    }
    return a;
}

struct PkeKeys {
    Bytes ek;
    Bytes dk;
};

PkeKeys pke_keygen(const Params& p, const Seed& d) {
    Bytes gin(d.begin(), d.end());
    gin.push_back(static_cast<std::uint8_t>(p.k));
    auto [rho, sigma] = g_hash(gin);
    secure_zero(gin);

    const auto a = expand_matrix(p, rho);
    std::uint8_t nonce = 0;
    PolyVec s(static_cast<std::size_t>(p.k)), e(static_cast<std::size_t>(p.k));
    for (auto& si : s) si = sample_cbd(prf(p.eta1, sigma, nonce++), p.eta1);
    for (auto& ei : e) ei = sample_cbd(prf(p.eta1, sigma, nonce++), p.eta1);
    for (auto& si : s) ntt(si);
    for (auto& ei : e) ntt(ei);

    PkeKeys keys;
    for (int i = 0; i < p.k; ++i) {
        Poly t = e[static_cast<std::size_t>(i)];
        for (int j = 0; j < p.k; ++j) {
            add_into(t, multiply_ntts(a[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)],
                                      s[static_cast<std::size_t>(j)]));
        }
        byte_encode(t, 12, keys.ek);
    }
    keys.ek.insert(keys.ek.end(), rho.begin(), rho.end());
    for (const auto& si : s) byte_encode(si, 12, keys.dk);
    secure_zero(sigma.data(), sigma.size());
    return keys;
}

Bytes pke_encrypt(const Params& p, ByteView ek, const Seed& m, const Seed& r) {
    const std::size_t k = static_cast<std::size_t>(p.k);
    PolyVec t_hat(k);
    for (std::size_t i = 0; i < k; ++i) t_hat[i] = byte_decode(ek.subspan(384 * i, 384), 12);
    Seed rho{};
    std::copy(ek.begin() + static_cast<std::ptrdiff_t>(384 * k), ek.end(), rho.begin());
    const auto a = expand_matrix(p, rho);

    std::uint8_t nonce = 0;
    PolyVec y(k), e1(k);
    for (auto& yi : y) yi = sample_cbd(prf(p.eta1, r, nonce++), p.eta1);
    for (auto& ei : e1) ei = sample_cbd(prf(p.eta2, r, nonce++), p.eta2);
    const Poly e2 = sample_cbd(prf(p.eta2, r, nonce), p.eta2);
    for (auto& yi : y) ntt(yi);

    Bytes c;
    for (std::size_t i = 0; i < k; ++i) {
        Poly u{};
        for (std::size_t j = 0; j < k; ++j) add_into(u, multiply_ntts(a[j][i], y[j]));
        inv_ntt(u);
        add_into(u, e1[i]);
        for (auto& coeff : u) coeff = compress(coeff, p.du);
        byte_encode(u, p.du, c);
    }

    Poly v{};
    for (std::size_t j = 0; j < k; ++j) add_into(v, multiply_ntts(t_hat[j], y[j]));
    inv_ntt(v);
    add_into(v, e2);
    const Poly mu_bits = byte_decode(m, 1);
    for (std::size_t i = 0; i < n; ++i) v[i] = mod_q(v[i] + decompress(mu_bits[i], 1));
    for (auto& coeff : v) coeff = compress(coeff, p.dv);
    byte_encode(v, p.dv, c);
    return c;
}

Seed pke_decrypt(const Params& p, ByteView dk, ByteView c) {
    const std::size_t k = static_cast<std::size_t>(p.k);
    const std::size_t u_bytes = 32 * static_cast<std::size_t>(p.du);
    Poly w = byte_decode(c.subspan(u_bytes * k), p.dv);
    for (auto& coeff : w) coeff = decompress(coeff, p.dv);

    Poly acc{};
    for (std::size_t i = 0; i < k; ++i) {
        Poly u = byte_decode(c.subspan(u_bytes * i, u_bytes), p.du);
        for (auto& coeff : u) coeff = decompress(coeff, p.du);
        ntt(u);
        const Poly s = byte_decode(dk.subspan(384 * i, 384), 12);
        add_into(acc, multiply_ntts(s, u));
    }
    inv_ntt(acc);
    for (std::size_t i = 0; i < n; ++i) w[i] = mod_q(w[i] - acc[i]);
    for (auto& coeff : w) coeff = compress(coeff, 1);
    Bytes m;
    byte_encode(w, 1, m);
    Seed out{};
    std::copy(m.begin(), m.end(), out.begin());
    secure_zero(m);
    return out;
}

}  // namespace

const Params& params(ParameterSet set) {
    for (const auto& p : k_params) {
        if (p.set == set) return p;
    }
    fail(Errc::internal, "unknown ML-KEM parameter set");
}

std::string_view name(ParameterSet set) {
    switch (set) {
        case ParameterSet::ml_kem_512: return "ML-KEM-512";
        case ParameterSet::ml_kem_768: return "ML-KEM-768";
        case ParameterSet::ml_kem_1024: return "ML-KEM-1024";
    }
    return "ML-KEM-?";
}

std::optional<ParameterSet> parse_parameter_set(std::string_view text) {
    if (text.starts_with("ML-KEM-") || text.starts_with("ml-kem-")) text.remove_prefix(7);
    if (text == "512") return ParameterSet::ml_kem_512;
    if (text == "768") return ParameterSet::ml_kem_768;
    if (text == "1024") return ParameterSet::ml_kem_1024;
    return std::nullopt;
}

bool encapsulation_key_is_valid(ParameterSet set, ByteView ek) {
    const Params& p = params(set);
    if (ek.size() != p.encapsulation_key_size()) return false;
    for (std::size_t i = 0; i < static_cast<std::size_t>(p.k); ++i) {
        const auto chunk = ek.subspan(384 * i, 384);
        Bytes re;
        byte_encode(byte_decode(chunk, 12), 12, re);
        if (!std::equal(re.begin(), re.end(), chunk.begin())) return false;
    }
    return true;
}

KeyPair keygen_deterministic(ParameterSet set, const Seed& d, const Seed& z) {
    const Params& p = params(set);
    PkeKeys pke = pke_keygen(p, d);
    KeyPair kp;
    kp.encapsulation_key = pke.ek;
    kp.decapsulation_key = std::move(pke.dk);
    const auto h = crypto::sha3_256(kp.encapsulation_key);
    kp.decapsulation_key.insert(kp.decapsulation_key.end(), kp.encapsulation_key.begin(),
                                kp.encapsulation_key.end());
    kp.decapsulation_key.insert(kp.decapsulation_key.end(), h.begin(), h.end());
    kp.decapsulation_key.insert(kp.decapsulation_key.end(), z.begin(), z.end());
    return kp;
}

KeyPair keygen(ParameterSet set) {
    Seed d{}, z{};
    crypto::random_bytes(d);
    crypto::random_bytes(z);
    KeyPair kp = keygen_deterministic(set, d, z);
    secure_zero(d.data(), d.size());
    secure_zero(z.data(), z.size());
    return kp;
}

Encapsulation encapsulate_deterministic(ParameterSet set, ByteView ek, const Seed& m) {
    const Params& p = params(set);
    if (!encapsulation_key_is_valid(set, ek)) fail(Errc::protocol, "invalid ML-KEM encapsulation key");
    const auto h = crypto::sha3_256(ek);
    Bytes gin(m.begin(), m.end());
    gin.insert(gin.end(), h.begin(), h.end());
    auto [key, r] = g_hash(gin);
    secure_zero(gin);
    Encapsulation out;
    out.ciphertext = pke_encrypt(p, ek, m, r);
    out.shared_secret = key;
    secure_zero(key.data(), key.size());
    secure_zero(r.data(), r.size());
    return out;
}

Encapsulation encapsulate(ParameterSet set, ByteView ek) {
    Seed m{};
    crypto::random_bytes(m);
    Encapsulation out = encapsulate_deterministic(set, ek, m);
    secure_zero(m.data(), m.size());
    return out;
}

SharedSecret decapsulate(ParameterSet set, ByteView dk, ByteView c) {
    const Params& p = params(set);
    if (dk.size() != p.decapsulation_key_size()) fail(Errc::protocol, "bad decapsulation key size");
    if (c.size() != p.ciphertext_size()) fail(Errc::protocol, "bad ML-KEM ciphertext size");
    const std::size_t k = static_cast<std::size_t>(p.k);
    const ByteView dk_pke = dk.subspan(0, 384 * k);
    const ByteView ek_pke = dk.subspan(384 * k, 384 * k + 32);
    const ByteView h = dk.subspan(768 * k + 32, 32);
    const ByteView z = dk.subspan(768 * k + 64, 32);

    Seed m = pke_decrypt(p, dk_pke, c);
    Bytes gin(m.begin(), m.end());
    gin.insert(gin.end(), h.begin(), h.end());
    auto [key, r] = g_hash(gin);
    secure_zero(gin);

    Bytes jin(z.begin(), z.end());
    jin.insert(jin.end(), c.begin(), c.end());
    const Bytes rejection = crypto::shake256(jin, shared_secret_size);

    const Bytes c_prime = pke_encrypt(p, ek_pke, m, r);
    SharedSecret out{};
    if (ct_equal(c, c_prime)) {
        std::copy(key.begin(), key.end(), out.begin());
    } else {
        std::copy(rejection.begin(), rejection.end(), out.begin());
    }
    secure_zero(m.data(), m.size());
    secure_zero(key.data(), key.size());
    secure_zero(r.data(), r.size());
    return out;
}

}  // namespace kmstn::mlkem
