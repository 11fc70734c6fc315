#include "kmstn/mesh.hpp"

#include <set>

#include "kmstn/error.hpp"

namespace kmstn::mesh {

Mesh::Mesh(config::Bundle bundle, MeshOptions options) : bundle_(std::move(bundle)), options_(std::move(options)) {
    bundle_.validate();
    const bool insecure = bundle_.deployment.insecure_sim;

    std::set<KmeId> started;
    for (const auto& node : bundle_.qkd_nodes) {
        if (started.count(node.kme_id)) continue;
        const auto* peer = bundle_.find_qkd_node(node.peer_kme_id);
        pairs_.push_back(sim::run_pair(node, *peer, insecure, options_.clock, options_.latency));
        started.insert(node.kme_id);
        started.insert(peer->kme_id);
    }
    for (auto& node : bundle_.qkd_nodes) {
        for (const auto& p : pairs_) {
            if (p.alice->config().kme_id == node.kme_id) node.endpoint.port = p.alice->port();
            if (p.bob->config().kme_id == node.kme_id) node.endpoint.port = p.bob->port();
        }
    }

    auto service_options = options_.service;
    service_options.clock = options_.clock;
    for (const auto& k : bundle_.kmstns) {
        services_.emplace(k.kmstn_id, std::make_unique<service::KmstnService>(bundle_, k.kmstn_id, service_options));
    }
    for (auto& k : bundle_.kmstns) {
        k.endpoint.port = services_.at(k.kmstn_id)->port();
        k.pqc_endpoint.port = services_.at(k.kmstn_id)->pqc_port();
    }
    if (options_.patch) options_.patch(bundle_);
    for (auto& [_, s] : services_) s->start(bundle_);
}

Mesh::~Mesh() { stop(); }

service::KmstnService& Mesh::kmstn(const std::string& id) {
    auto it = services_.find(id);
    if (it == services_.end()) fail(Errc::not_found, "no kmstn " + id + " in the mesh");
    return *it->second;
}

sim::QkdNodeServer& Mesh::kme(const KmeId& id) {
    for (auto& p : pairs_) {
        if (p.alice->config().kme_id == id) return *p.alice;
        if (p.bob->config().kme_id == id) return *p.bob;
    }
    fail(Errc::not_found, "no kme " + id.str() + " in the mesh");
}

sim::QkdPair& Mesh::pair(const KmeId& id) { return kme(id).pair(); }

std::vector<std::string> Mesh::kmstn_ids() const {
    std::vector<std::string> out;
    for (const auto& [id, _] : services_) out.push_back(id);
    return out;
}

void Mesh::stop_kmstn(const std::string& id) { kmstn(id).stop(); }

void Mesh::stop() {
    for (auto& [_, s] : services_) s->stop();
    for (auto& p : pairs_) p.stop();
}

bool Mesh::wait_idle(std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    // Acks can trigger further work on other nodes; settle until a full
    // round finds everyone idle.
    for (;;) {
        bool all = true;
        for (auto& [_, s] : services_) {
            const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
            if (left.count() <= 0) return false;
            if (!s->wait_idle(left)) return false;
        }
        for (auto& [_, s] : services_) all = all && s->wait_idle(std::chrono::milliseconds(0));
        if (all) return true;
    }
}

}  // namespace kmstn::mesh
