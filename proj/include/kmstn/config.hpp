#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "kmstn/link_profile.hpp"
#include "kmstn/mlkem.hpp"
#include "kmstn/model.hpp"
#include "kmstn/net.hpp"

namespace kmstn::config {

namespace fs = std::filesystem;

/// PEM files for one TLS identity plus the CA that signs its peers.
struct TlsFiles {
    fs::path cert;
    fs::path key;
    fs::path ca;

    bool operator==(const TlsFiles&) const = default;
};

/// One side of a simulated QKD pair. The pair is formed by two documents
/// naming each other as peer.
struct QkdNodeConfig {
    KmeId kme_id;
    net::Endpoint endpoint;
    /// SAE that calls enc_keys here.
    SaeId master_sae_id;
    /// SAE on the far side; also the SAE id dec_keys is addressed with.
    SaeId slave_sae_id;
    KmeId peer_kme_id;
    LinkProfile link;
    std::uint64_t seed = 1;
    std::optional<TlsFiles> tls;

    bool operator==(const QkdNodeConfig&) const = default;
};

struct KmstnConfig {
    std::string kmstn_id;
    net::Endpoint endpoint;
    net::Endpoint pqc_endpoint;
    std::vector<KmeId> attached_kmes;
    std::vector<SaeId> bound_saes;
    fs::path state_dir;
    mlkem::ParameterSet kem = mlkem::ParameterSet::ml_kem_768;
    std::optional<TlsFiles> tls;

    bool operator==(const KmstnConfig&) const = default;
};

struct SaeConfig {
    SaeId sae_id;
    std::string kmstn_id;
    std::optional<TlsFiles> tls;

    bool operator==(const SaeConfig&) const = default;
};

struct EdgeConfig {
    std::string a;
    std::string b;
    bool qkd_link = false;
    double weight = 1.0;

    bool operator==(const EdgeConfig&) const = default;
};

struct DeploymentConfig {
    /// Plain HTTP with header-asserted identities. Only for local simulation.
    bool insecure_sim = false;

    bool operator==(const DeploymentConfig&) const = default;
};

/// Every document of one deployment.
struct Bundle {
    std::vector<QkdNodeConfig> qkd_nodes;
    std::vector<KmstnConfig> kmstns;
    std::vector<SaeConfig> saes;
    std::vector<EdgeConfig> edges;
    DeploymentConfig deployment;

    const QkdNodeConfig* find_qkd_node(const KmeId& id) const;
    const KmstnConfig* find_kmstn(const std::string& id) const;
    const SaeConfig* find_sae(const SaeId& id) const;

    /// Cross-document checks: duplicate ids, dangling references, SAEs bound
    /// nowhere, QKD pairs that do not mirror each other, QKD edges without a
    /// pair spanning them. Throws Error(Errc::config) naming the reference.
    void validate() const;

    bool operator==(const Bundle&) const = default;
};

/// Adds one document (or an array of documents) to the bundle by its "kind".
/// Relative paths inside the document resolve against `base_dir`.
void add_document(Bundle& bundle, const nlohmann::json& doc, const fs::path& base_dir = {});

/// Parses documents without cross-validation.
Bundle parse_bundle(const std::vector<nlohmann::json>& docs, const fs::path& base_dir = {});

/// Reads one JSON file or every *.json file in a directory (sorted by name)
/// and validates the result.
Bundle load_bundle(const fs::path& path);

/// Inverse of add_document, one array of documents for the whole bundle.
nlohmann::json to_json(const Bundle& bundle);

/// Writes the bundle as one file per document into `dir`.
void write_bundle(const Bundle& bundle, const fs::path& dir);

}  // namespace kmstn::config
