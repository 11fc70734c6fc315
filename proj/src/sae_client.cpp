#include "kmstn/sae_client.hpp"

#include <fstream>

namespace kmstn::sae {

namespace {

std::filesystem::path resolve(const std::filesystem::path& p, const std::filesystem::path& base) {
    return p.is_relative() && !base.empty() ? base / p : p;
}

}  // namespace

SaeProfile profile_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir) {
    try {
        SaeProfile p;
        p.sae_id = SaeId(doc.at("sae_id").get<std::string>());
        p.kmstn_endpoint = net::Endpoint::parse(doc.at("kmstn").get<std::string>());
        if (doc.contains("tls") && !doc.at("tls").is_null()) {
            const auto& t = doc.at("tls");
            p.tls = config::TlsFiles{resolve(t.at("cert").get<std::string>(), base_dir),
                                     resolve(t.at("key").get<std::string>(), base_dir),
                                     resolve(t.at("ca").get<std::string>(), base_dir)};
        }
        return p;
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::config, std::string("bad SAE profile: ") + e.what());
    } catch (const Error& e) {
        if (e.code() == Errc::config) throw;
        fail(Errc::config, std::string("bad SAE profile: ") + e.what());
    }
}

SaeProfile load_profile(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(Errc::config, "cannot read SAE profile " + path.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::config, path.string() + ": " + e.what());
    }
    return profile_from_json(doc, path.parent_path());
}

SaeProfile profile_for(const config::Bundle& bundle, const SaeId& sae) {
    const auto* doc = bundle.find_sae(sae);
    if (!doc) fail(Errc::unknown_sae, "SAE " + sae.str() + " is not in the deployment");
    const auto* kmstn = bundle.find_kmstn(doc->kmstn_id);
    if (!kmstn) fail(Errc::config, "SAE " + sae.str() + " names unknown kmstn " + doc->kmstn_id);
    return SaeProfile{sae, kmstn->endpoint, bundle.deployment.insecure_sim ? std::nullopt : doc->tls};
}

SaeClient::SaeClient(SaeProfile profile, std::shared_ptr<const Clock> clock, std::chrono::milliseconds timeout)
    : profile_(std::move(profile)),
      clock_(std::move(clock)),
      client_(profile_.kmstn_endpoint, {.tls = profile_.tls,
                                        .identity = profile_.sae_id.str(),
                                        .connect_timeout = std::chrono::milliseconds(2000),
                                        .read_timeout = timeout}) {}

http::Response SaeClient::timed_post(const std::string& path, const std::string& body, double* latency_ms) const {
    const auto sent = clock_->now();
    auto resp = client_.post(path, body);
    const auto received = clock_->now();
    if (latency_ms) {
        double ms = to_millis(received - sent);
        const auto header = resp.header(http::sim_latency_header);
        if (!header.empty()) ms += std::stod(header);
        *latency_ms = std::max(0.0, ms);
    }
    return resp;
}

KeyContainer SaeClient::get_key(const std::vector<SaeId>& slaves, int number, int size_bits, double* latency_ms) const {
    if (slaves.empty()) fail(Errc::bad_request, "at least one slave SAE is required");
    etsi014::KeyRequest req;
    req.number = number;
    req.size = size_bits;
    req.additional_slave_sae_ids.assign(slaves.begin() + 1, slaves.end());
    const auto resp = timed_post("/api/v1/keys/" + slaves.front().str() + "/enc_keys", etsi014::encode(req), latency_ms);
    http::throw_if_error(resp);
    return decode_key_container(resp.body);
}

KeyContainer SaeClient::get_key_with_ids(const SaeId& origin, const std::vector<std::string>& key_ids,
                                         double* latency_ms) const {
    if (key_ids.empty()) fail(Errc::bad_request, "no key ids given");
    const auto resp = timed_post("/api/v1/keys/" + origin.str() + "/dec_keys",
                                 etsi014::encode(etsi014::KeyIdsRequest{key_ids}), latency_ms);
    http::throw_if_error(resp);
    return decode_key_container(resp.body);
}

etsi014::Status SaeClient::status(const SaeId& slave) const {
    const auto resp = client_.get("/api/v1/keys/" + slave.str() + "/status");
    http::throw_if_error(resp);
    return etsi014::decode_status(resp.body);
}

int exit_code_for(Errc code) noexcept {
    switch (code) {
        case Errc::bad_request:
        case Errc::config:
        case Errc::invariant:
        case Errc::parse:
            return 2;
        case Errc::depleted:
        case Errc::hop_depleted:
            return 3;
        case Errc::not_found:
        case Errc::key_not_present:
        case Errc::unknown_sae:
        case Errc::voided:
            return 4;
        case Errc::unauthorized:
        case Errc::auth_failure:
            return 5;
        case Errc::unreachable:
        case Errc::peer_unreachable:
        case Errc::connect:
            return 6;
        default:
            return 1;
    }
}

}  // namespace kmstn::sae
