#pragma once

#include <cstdint>

#include "json.hpp"

namespace kmstn {

/// Parameters of one simulated QKD link.
struct LinkProfile {
    double mean_skr_bps = 2500.0;
    int block_size_bits = 256;
    int blocks_per_burst = 8;
    std::int64_t buffer_capacity_keys = 1000;
    /// Keys present when the pair starts; -1 means a full buffer.
    std::int64_t initial_keys = -1;
    /// Lognormal service latency: median and log-space sigma.
    double latency_median_ms = 100.0;
    double latency_sigma = 0.2;

    /// Mean time between bursts implied by rate, block size and burst size.
    double mean_burst_interval_s() const {
        return static_cast<double>(block_size_bits) * blocks_per_burst / mean_skr_bps;
    }

    /// Profile whose per-request service rate matches its generation rate:
    /// the latency median is chosen so the mean of block_size/latency over
    /// the lognormal equals `skr_bps`.
    static LinkProfile calibrated(double skr_bps, double sigma = 0.2, int block_bits = 256);

    /// Throws Error(Errc::config) on non-positive rates or sizes.
    void validate() const;

    bool operator==(const LinkProfile&) const = default;
};

nlohmann::json to_json(const LinkProfile& p);
/// Missing fields keep their defaults. Throws Error(Errc::config).
LinkProfile link_profile_from_json(const nlohmann::json& j);

}  // namespace kmstn
