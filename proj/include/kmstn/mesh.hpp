#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "kmstn/clock.hpp"
#include "kmstn/config.hpp"
#include "kmstn/kmstn_service.hpp"
#include "kmstn/qkd_sim.hpp"

// A whole deployment in one process: every simulated QKD pair and every
// KMSTN, bound to the ports in the bundle (0 picks free ones).
namespace kmstn::mesh {

struct MeshOptions {
    std::shared_ptr<Clock> clock = system_clock();
    sim::LatencyMode latency = sim::LatencyMode::report;
    /// Template for every node; its clock is replaced by `clock`.
    service::ServiceOptions service;
    /// Runs on the resolved bundle before the KMSTNs start, e.g. to route a
    /// node's KEM endpoint through a proxy.
    std::function<void(config::Bundle&)> patch;
};

class Mesh {
public:
    /// Throws Error(Errc::config) or Error(Errc::bind).
    explicit Mesh(config::Bundle bundle, MeshOptions options = {});
    ~Mesh();
    Mesh(const Mesh&) = delete;
    Mesh& operator=(const Mesh&) = delete;

    /// The bundle with every port filled in (after `patch`).
    const config::Bundle& bundle() const noexcept { return bundle_; }
    const std::shared_ptr<Clock>& clock() const noexcept { return options_.clock; }

    /// Throws Error(Errc::not_found).
    service::KmstnService& kmstn(const std::string& id);
    sim::QkdNodeServer& kme(const KmeId& id);
    /// Shared buffer of the pair `id` belongs to.
    sim::QkdPair& pair(const KmeId& id);
    std::vector<std::string> kmstn_ids() const;

    /// Takes one node off the network.
    void stop_kmstn(const std::string& id);
    void stop();

    /// Every running node idle. False on timeout.
    bool wait_idle(std::chrono::milliseconds timeout = std::chrono::seconds(30));

private:
    config::Bundle bundle_;
    MeshOptions options_;
    std::vector<sim::RunningPair> pairs_;
    std::map<std::string, std::unique_ptr<service::KmstnService>> services_;
};

}  // namespace kmstn::mesh
