#include <cstdlib>
#include <iostream>

#include "CLI11.hpp"
#include "kmstn/error.hpp"
#include "kmstn/sae_client.hpp"

using namespace kmstn;

namespace {

void print_container(const KeyContainer& c, bool json) {
    if (json) {
        std::cout << encode_key_container(c) << "\n";
        return;
    }
    for (const auto& k : c.keys) std::cout << k.key_id << "  " << base64_encode(k.key_material) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"SAE client for the KMSTN key delivery API"};
    app.require_subcommand(1);

    std::string config_path;
    std::string kmstn;
    std::string sae_id;
    bool json = false;
    app.add_option("--config", config_path, "SAE profile file (default: $SAE_CONFIG)");
    app.add_option("--kmstn", kmstn, "KMSTN endpoint host:port (overrides the profile)");
    app.add_option("--sae-id", sae_id, "Own SAE id (overrides the profile)");
    app.add_flag("--json", json, "Machine-readable output");

    std::vector<std::string> slaves;
    int number = 1;
    int size = 256;
    std::vector<std::string> key_ids;

    auto* get_key = app.add_subcommand("get-key", "Request new keys");
    get_key->add_option("--slave-sae", slaves, "Slave SAE; repeat for relay targets")->required();
    get_key->add_option("--number", number, "Number of keys")->check(CLI::Range(1, 128));
    get_key->add_option("--size", size, "Key size in bits")->check(CLI::PositiveNumber);

    std::string origin;
    auto* with_ids = app.add_subcommand("get-key-with-ids", "Retrieve keys by id");
    with_ids->add_option("--slave-sae", origin, "SAE that requested the keys")->required();
    with_ids->add_option("--key-id", key_ids, "Key id; repeatable")->required();

    std::string status_slave;
    auto* status = app.add_subcommand("status", "Key pair status");
    status->add_option("--slave-sae", status_slave, "Slave SAE")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (config_path.empty()) {
            if (const char* env = std::getenv("SAE_CONFIG")) config_path = env;
        }
        sae::SaeProfile profile;
        if (!config_path.empty()) profile = sae::load_profile(config_path);
        if (!kmstn.empty()) profile.kmstn_endpoint = net::Endpoint::parse(kmstn);
        if (!sae_id.empty()) profile.sae_id = SaeId(sae_id);
        if (profile.sae_id.empty() || profile.kmstn_endpoint.port == 0) {
            std::cerr << "error: no SAE profile; pass --config, set SAE_CONFIG or give --kmstn and --sae-id\n";
            return 2;
        }
        const sae::SaeClient client(profile);

        if (*get_key) {
            std::vector<SaeId> ids;
            for (const auto& s : slaves) ids.emplace_back(s);
            print_container(client.get_key(ids, number, size), json);
        } else if (*with_ids) {
            print_container(client.get_key_with_ids(SaeId(origin), key_ids), json);
        } else {
            const auto s = client.status(SaeId(status_slave));
            if (json) {
                std::cout << etsi014::encode(s) << "\n";
            } else {
                std::cout << "pair " << s.master_sae_id << " -> " << s.slave_sae_id << ": " << s.stored_key_count << "/"
                          << s.max_key_count << " keys of " << s.key_size << " bits";
                if (s.kmstn_id) std::cout << ", kmstn " << *s.kmstn_id;
                if (s.reachable) std::cout << (*s.reachable ? ", reachable" : ", unreachable");
                std::cout << "\n";
            }
        }
        return 0;
    } catch (const Error& e) {
        std::cerr << "error (" << to_string(e.code()) << "): " << e.what() << "\n";
        return sae::exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
