#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "kmstn/clock.hpp"
#include "kmstn/config.hpp"
#include "kmstn/error.hpp"
#include "kmstn/etsi014.hpp"
#include "kmstn/http.hpp"
#include "kmstn/model.hpp"

// The SAE side of the key delivery API.
namespace kmstn::sae {

struct SaeProfile {
    SaeId sae_id;
    net::Endpoint kmstn_endpoint;
    /// Absent means plain HTTP with the SAE id in X-Client-Id.
    std::optional<config::TlsFiles> tls;
};

/// {"sae_id", "kmstn": "host:port", "tls": {cert, key, ca}}. Relative TLS
/// paths resolve against the file's directory. Throws Error(Errc::config).
SaeProfile load_profile(const std::filesystem::path& path);
SaeProfile profile_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
/// The profile of `sae` inside a deployment: its KMSTN endpoint and TLS files.
SaeProfile profile_for(const config::Bundle& bundle, const SaeId& sae);

/// Safe for concurrent use by many threads.
class SaeClient {
public:
    /// Latency is measured on `clock`; simulated service time reported by the
    /// server is added on top.
    explicit SaeClient(SaeProfile profile, std::shared_ptr<const Clock> clock = system_clock(),
                       std::chrono::milliseconds timeout = std::chrono::seconds(30));

    /// The first slave selects the key pair; further ones are relay targets.
    /// Throws the typed Error carried by the response (depleted, unknown_sae,
    /// unauthorized, peer_unreachable, ...).
    KeyContainer get_key(const std::vector<SaeId>& slaves, int number = 1, int size_bits = 256,
                         double* latency_ms = nullptr) const;
    /// Throws Error(Errc::bad_request) for an empty id list before sending.
    KeyContainer get_key_with_ids(const SaeId& origin, const std::vector<std::string>& key_ids,
                                  double* latency_ms = nullptr) const;
    etsi014::Status status(const SaeId& slave) const;

    const SaeProfile& profile() const noexcept { return profile_; }

private:
    http::Response timed_post(const std::string& path, const std::string& body, double* latency_ms) const;

    SaeProfile profile_;
    std::shared_ptr<const Clock> clock_;
    http::Client client_;
};

/// 0 ok, 2 usage, 3 depleted, 4 not found, 5 unauthorized, 6 unreachable,
/// 1 anything else.
int exit_code_for(Errc code) noexcept;

}  // namespace kmstn::sae
