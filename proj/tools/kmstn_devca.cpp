#include <iostream>

#include "CLI11.hpp"
#include "kmstn/config.hpp"
#include "kmstn/devca.hpp"
#include "kmstn/error.hpp"

using namespace kmstn;

int main(int argc, char** argv) {
    CLI::App app{"Development certificate authority for the KMSTN mesh"};
    app.require_subcommand(1);

    std::string dir;
    std::string name = "kmstn-dev-ca";
    auto* init = app.add_subcommand("init", "Create a CA");
    init->add_option("--dir", dir, "Where ca.crt and ca.key go")->required();
    init->add_option("--name", name)->capture_default_str();

    std::string ca;
    std::string cn;
    std::string out;
    std::vector<std::string> dns{"localhost"};
    std::vector<std::string> ips{"127.0.0.1"};
    auto* issue = app.add_subcommand("issue", "Issue a client+server certificate");
    issue->add_option("--ca", ca, "CA directory")->required();
    issue->add_option("--cn", cn, "Common name: the KME, KMSTN or SAE id")->required();
    issue->add_option("--out", out, "Output directory")->required();
    issue->add_option("--dns", dns, "DNS subject alternative names")->capture_default_str();
    issue->add_option("--ip", ips, "IP subject alternative names")->capture_default_str();

    std::string config_path;
    auto* provision = app.add_subcommand("provision", "Certify every identity of a deployment and turn TLS on");
    provision->add_option("--config", config_path, "Deployment file or directory")->required();
    provision->add_option("--out", out, "Directory for the updated deployment and the PKI")->required();

    CLI11_PARSE(app, argc, argv);
    try {
        if (*init) {
            devca::create_ca(dir, name);
            std::cout << dir << "/ca.crt\n";
        } else if (*issue) {
            const auto files = devca::issue(ca, cn, out, dns, ips);
            std::cout << files.cert.string() << "\n" << files.key.string() << "\n";
        } else {
            auto bundle = config::load_bundle(config_path);
            devca::provision(bundle, std::filesystem::absolute(out) / "pki");
            config::write_bundle(bundle, out);
            std::cout << "wrote TLS deployment to " << out << "\n";
        }
        return 0;
    } catch (const Error& e) {
        std::cerr << "error (" << to_string(e.code()) << "): " << e.what() << "\n";
        return 1;
    }
}
