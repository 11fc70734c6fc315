#include <iostream>
#include <memory>

#include "CLI11.hpp"
#include "kmstn/config.hpp"
#include "kmstn/devca.hpp"
#include "kmstn/error.hpp"
#include "kmstn/kmstn_service.hpp"
#include "kmstn/log.hpp"
#include "kmstn/presets.hpp"
#include "signals.hpp"

using namespace kmstn;

int main(int argc, char** argv) {
    CLI::App app{"KMSTN trusted-node daemon"};
    app.require_subcommand(1);
    bool verbose = false;
    app.add_flag("-v,--verbose", verbose, "Log at info level");

    std::string config_path;
    std::vector<std::string> ids;
    bool all = false;
    std::string device_secret;
    std::string password;
    auto* run = app.add_subcommand("run", "Serve one or more KMSTNs of a deployment");
    run->add_option("--config", config_path, "Deployment file or directory")->required();
    run->add_option("--id", ids, "KMSTN id to serve; repeatable");
    run->add_flag("--all", all, "Serve every KMSTN of the deployment");
    run->add_option("--device-secret", device_secret, "Emulated device secret file");
    run->add_option("--store-password", password, "Seal the store with a password instead");

    presets::ChainOptions chain;
    std::string out_dir;
    bool tls = false;
    auto* gen = app.add_subcommand("chain", "Write a linear-chain deployment");
    gen->add_option("--out", out_dir, "Output directory")->required();
    gen->add_option("--nodes", chain.nodes, "Even number of KMSTNs")->capture_default_str();
    gen->add_option("--host", chain.host)->capture_default_str();
    gen->add_option("--base-port", chain.base_port, "Node i uses base+10i, +1, +2")->capture_default_str();
    gen->add_option("--fast-skr", chain.fast_skr_bps, "Secret key rate of fast islands, bps")->capture_default_str();
    gen->add_option("--slow-skr", chain.slow_skr_bps, "Secret key rate of slow islands, bps")->capture_default_str();
    gen->add_option("--slow-island", chain.slow_islands, "1-based slow island; repeatable");
    gen->add_option("--seed", chain.seed)->capture_default_str();
    gen->add_flag("--tls", tls, "Issue certificates from a new development CA");

    CLI11_PARSE(app, argc, argv);
    log::set_min_level(verbose ? log::Level::info : log::Level::warn);

    try {
        if (*gen) {
            if (chain.base_port == 0) chain.base_port = 7000;
            chain.state_root = std::filesystem::absolute(out_dir) / "state";
            auto bundle = presets::chain(chain);
            if (tls) devca::provision(bundle, std::filesystem::absolute(out_dir) / "pki");
            config::write_bundle(bundle, out_dir);
            std::cout << "wrote " << bundle.kmstns.size() << "-node deployment to " << out_dir << "\n";
            return 0;
        }

        tools::block_shutdown_signals();
        const auto bundle = config::load_bundle(config_path);
        if (all) {
            for (const auto& k : bundle.kmstns) ids.push_back(k.kmstn_id);
        }
        if (ids.empty()) {
            std::cerr << "error: give --id or --all\n";
            return 2;
        }
        service::ServiceOptions options;
        if (!device_secret.empty()) options.seal.device_secret_path = device_secret;
        if (!password.empty()) options.seal.password = password;
        std::vector<std::unique_ptr<service::KmstnService>> nodes;
        for (const auto& id : ids) {
            nodes.push_back(std::make_unique<service::KmstnService>(bundle, id, options));
            nodes.back()->start();
            std::cout << id << " listening on " << nodes.back()->port() << " (KEM " << nodes.back()->pqc_port() << ")"
                      << std::endl;
        }
        tools::wait_for_shutdown();
        for (auto& n : nodes) n->stop();
        return 0;
    } catch (const Error& e) {
        std::cerr << "error (" << to_string(e.code()) << "): " << e.what() << "\n";
        return 1;
    }
}
