#include "kmstn/devca.hpp"

#include <openssl/evp.h>
#include <openssl/pem.h>
#include <openssl/rand.h>
#include <openssl/x509v3.h>

#include <cstdio>
#include <memory>

#include "kmstn/error.hpp"
#include "kmstn/keystore.hpp"

namespace kmstn::devca {

namespace {

using Key = std::unique_ptr<EVP_PKEY, decltype(&EVP_PKEY_free)>;
using Cert = std::unique_ptr<X509, decltype(&X509_free)>;

void check(bool ok, const std::string& what) {
    if (!ok) fail(Errc::io, "devca: " + what);
}

Key new_key() {
    Key key(EVP_EC_gen("P-256"), EVP_PKEY_free);
    check(key != nullptr, "key generation failed");
    return key;
}

std::string pem_of(auto writer) {
    std::unique_ptr<BIO, decltype(&BIO_free)> bio(BIO_new(BIO_s_mem()), BIO_free);
    check(writer(bio.get()) == 1, "PEM encoding failed");
    char* data = nullptr;
    const long n = BIO_get_mem_data(bio.get(), &data);
    return std::string(data, static_cast<std::size_t>(n));
}

void write_pem(const fs::path& path, const std::string& pem) {
    keystore::atomic_write(path, ByteView(reinterpret_cast<const std::uint8_t*>(pem.data()), pem.size()));
}

template <class T>
T read_pem(const fs::path& path, auto reader, auto deleter) {
    std::unique_ptr<FILE, decltype(&std::fclose)> f(std::fopen(path.c_str(), "r"), std::fclose);
    check(f != nullptr, "cannot read " + path.string());
    auto* obj = reader(f.get(), nullptr, nullptr, nullptr);
    check(obj != nullptr, "cannot parse " + path.string());
    return T(obj, deleter);
}

void add_ext(X509* cert, X509* issuer, int nid, const std::string& value) {
    X509V3_CTX ctx;
    X509V3_set_ctx_nodb(&ctx);
    X509V3_set_ctx(&ctx, issuer, cert, nullptr, nullptr, 0);
    X509_EXTENSION* ext = X509V3_EXT_conf_nid(nullptr, &ctx, nid, value.c_str());
    check(ext != nullptr, "bad extension " + value);
    X509_add_ext(cert, ext, -1);
    X509_EXTENSION_free(ext);
}

Cert new_cert(const std::string& cn, EVP_PKEY* key, int days) {
    Cert cert(X509_new(), X509_free);
    X509_set_version(cert.get(), 2);
    unsigned char serial[16];
    RAND_bytes(serial, sizeof serial);
    serial[0] &= 0x7F;
    BIGNUM* bn = BN_bin2bn(serial, sizeof serial, nullptr);
    BN_to_ASN1_INTEGER(bn, X509_get_serialNumber(cert.get()));
    BN_free(bn);
    X509_gmtime_adj(X509_getm_notBefore(cert.get()), -3600);
    X509_gmtime_adj(X509_getm_notAfter(cert.get()), 60L * 60 * 24 * days);
    X509_set_pubkey(cert.get(), key);
    X509_NAME* name = X509_get_subject_name(cert.get());
    X509_NAME_add_entry_by_txt(name, "CN", MBSTRING_UTF8, reinterpret_cast<const unsigned char*>(cn.c_str()), -1, -1, 0);
    return cert;
}

}  // namespace

void create_ca(const fs::path& dir, const std::string& name) {
    fs::create_directories(dir);
    auto key = new_key();
    auto cert = new_cert(name, key.get(), 3650);
    X509_set_issuer_name(cert.get(), X509_get_subject_name(cert.get()));
    add_ext(cert.get(), cert.get(), NID_basic_constraints, "critical,CA:TRUE");
    add_ext(cert.get(), cert.get(), NID_key_usage, "critical,keyCertSign,cRLSign");
    add_ext(cert.get(), cert.get(), NID_subject_key_identifier, "hash");
    check(X509_sign(cert.get(), key.get(), EVP_sha256()) > 0, "CA signing failed");
    write_pem(dir / "ca.key", pem_of([&](BIO* b) {
                  return PEM_write_bio_PrivateKey(b, key.get(), nullptr, nullptr, 0, nullptr, nullptr);
              }));
    write_pem(dir / "ca.crt", pem_of([&](BIO* b) { return PEM_write_bio_X509(b, cert.get()); }));
}

config::TlsFiles issue(const fs::path& ca_dir, const std::string& common_name, const fs::path& out_dir,
                       const std::vector<std::string>& dns, const std::vector<std::string>& ips) {
    auto ca_key = read_pem<Key>(ca_dir / "ca.key", PEM_read_PrivateKey, EVP_PKEY_free);
    auto ca_cert = read_pem<Cert>(ca_dir / "ca.crt", PEM_read_X509, X509_free);

    fs::create_directories(out_dir);
    auto key = new_key();
    auto cert = new_cert(common_name, key.get(), 825);
    X509_set_issuer_name(cert.get(), X509_get_subject_name(ca_cert.get()));
    add_ext(cert.get(), ca_cert.get(), NID_basic_constraints, "critical,CA:FALSE");
    add_ext(cert.get(), ca_cert.get(), NID_key_usage, "critical,digitalSignature,keyAgreement");
    add_ext(cert.get(), ca_cert.get(), NID_ext_key_usage, "serverAuth,clientAuth");
    std::string san;
    for (const auto& d : dns) san += (san.empty() ? "" : ",") + std::string("DNS:") + d;
    for (const auto& ip : ips) san += (san.empty() ? "" : ",") + std::string("IP:") + ip;
    if (!san.empty()) add_ext(cert.get(), ca_cert.get(), NID_subject_alt_name, san);
    check(X509_sign(cert.get(), ca_key.get(), EVP_sha256()) > 0, "leaf signing failed");

    config::TlsFiles files{out_dir / (common_name + ".crt"), out_dir / (common_name + ".key"), ca_dir / "ca.crt"};
    write_pem(files.key, pem_of([&](BIO* b) {
                  return PEM_write_bio_PrivateKey(b, key.get(), nullptr, nullptr, 0, nullptr, nullptr);
              }));
    write_pem(files.cert, pem_of([&](BIO* b) { return PEM_write_bio_X509(b, cert.get()); }));
    return files;
}

}  // namespace kmstn::devca

namespace kmstn::devca {

void provision(config::Bundle& bundle, const fs::path& dir) {
    const auto ca_dir = dir / "ca";
    create_ca(ca_dir);
    const auto leaves = dir / "certs";
    for (auto& n : bundle.qkd_nodes) n.tls = issue(ca_dir, n.kme_id.str(), leaves);
    for (auto& k : bundle.kmstns) k.tls = issue(ca_dir, k.kmstn_id, leaves);
    for (auto& s : bundle.saes) s.tls = issue(ca_dir, s.sae_id.str(), leaves);
    bundle.deployment.insecure_sim = false;
}

}  // namespace kmstn::devca
