#include <iostream>
#include <set>

#include "CLI11.hpp"
#include "kmstn/config.hpp"
#include "kmstn/error.hpp"
#include "kmstn/log.hpp"
#include "kmstn/qkd_sim.hpp"
#include "signals.hpp"

using namespace kmstn;

int main(int argc, char** argv) {
    CLI::App app{"Simulated QKD node pairs"};
    std::string config_path;
    std::vector<std::string> kmes;
    std::string latency = "sleep";
    bool verbose = false;
    app.add_option("--config", config_path, "Deployment file or directory")->required();
    app.add_option("--kme", kmes, "Serve only the pair containing this KME; repeatable");
    app.add_option("--latency", latency, "sleep: wait out service latency; report: return it in a header")
        ->check(CLI::IsMember({"sleep", "report"}))
        ->capture_default_str();
    app.add_flag("-v,--verbose", verbose, "Log at info level");
    CLI11_PARSE(app, argc, argv);
    log::set_min_level(verbose ? log::Level::info : log::Level::warn);

    try {
        tools::block_shutdown_signals();
        const auto bundle = config::load_bundle(config_path);
        const auto mode = latency == "report" ? sim::LatencyMode::report : sim::LatencyMode::sleep;
        const std::set<std::string> wanted(kmes.begin(), kmes.end());
        std::set<KmeId> started;
        std::vector<sim::RunningPair> pairs;
        for (const auto& node : bundle.qkd_nodes) {
            if (started.count(node.kme_id)) continue;
            const auto* peer = bundle.find_qkd_node(node.peer_kme_id);
            if (!wanted.empty() && !wanted.count(node.kme_id.str()) && !wanted.count(peer->kme_id.str())) continue;
            pairs.push_back(sim::run_pair(node, *peer, bundle.deployment.insecure_sim, system_clock(), mode));
            started.insert(node.kme_id);
            started.insert(peer->kme_id);
            std::cout << node.kme_id.str() << " on " << pairs.back().alice->port() << ", " << peer->kme_id.str() << " on "
                      << pairs.back().bob->port() << std::endl;
        }
        if (pairs.empty()) {
            std::cerr << "error: no matching QKD pair\n";
            return 2;
        }
        tools::wait_for_shutdown();
        for (auto& p : pairs) p.stop();
        return 0;
    } catch (const Error& e) {
        std::cerr << "error (" << to_string(e.code()) << "): " << e.what() << "\n";
        return 1;
    }
}
