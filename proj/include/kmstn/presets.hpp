#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>

#include "kmstn/config.hpp"

namespace kmstn::presets {

/// Linear chain of islands: nodes (1,2), (3,4), ... share a QKD pair, and
/// consecutive islands are joined by PQC-only edges.
struct ChainOptions {
    int nodes = 8;
    std::string host = "127.0.0.1";
    /// Node i listens on base+10i (service), +1 (KEM) and its KME on +2.
    /// Zero leaves every port at 0 for the caller to assign.
    std::uint16_t base_port = 0;
    std::filesystem::path state_root = "state";
    bool insecure_sim = true;
    double fast_skr_bps = 2500.0;
    double slow_skr_bps = 500.0;
    /// 1-based island indices that get the slow profile.
    std::set<int> slow_islands = {3};
    std::uint64_t seed = 1;
};

/// Throws Error(Errc::config) for an odd or non-positive node count.
config::Bundle chain(const ChainOptions& options = {});

inline std::string kmstn_name(int i) { return "kmstn" + std::to_string(i); }
inline std::string sae_name(int i) { return "sae" + std::to_string(i); }
inline std::string kme_name(int i) { return "kme" + std::to_string(i); }

}  // namespace kmstn::presets
