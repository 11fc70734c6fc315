#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "kmstn/config.hpp"

// Development certificate authority for the mTLS mesh: P-256 keys, PEM files.
namespace kmstn::devca {

namespace fs = std::filesystem;

/// Writes ca.crt and ca.key into `dir`. Throws Error(Errc::io).
void create_ca(const fs::path& dir, const std::string& name = "kmstn-dev-ca");

/// Issues a leaf for `common_name` (usable as client and server) signed by
/// the CA in `ca_dir`; writes <common_name>.crt/.key into `out_dir`. The
/// certificate carries the given DNS names and IP addresses as SANs.
config::TlsFiles issue(const fs::path& ca_dir, const std::string& common_name, const fs::path& out_dir,
                       const std::vector<std::string>& dns = {"localhost"},
                       const std::vector<std::string>& ips = {"127.0.0.1"});

/// Creates a CA under `dir`, issues a leaf for every KME, KMSTN and SAE of
/// the bundle, points their documents at the files and turns insecure mode
/// off.
void provision(config::Bundle& bundle, const fs::path& dir);

}  // namespace kmstn::devca
