#include "kmstn/link_profile.hpp"

#include <cmath>

#include "kmstn/error.hpp"

namespace kmstn {

LinkProfile LinkProfile::calibrated(double skr_bps, double sigma, int block_bits) {
    LinkProfile p;
    p.mean_skr_bps = skr_bps;
    p.block_size_bits = block_bits;
    p.latency_sigma = sigma;
    p.latency_median_ms = 1000.0 * block_bits / skr_bps * std::exp(sigma * sigma / 2.0);
    return p;
}

void LinkProfile::validate() const {
    if (!(mean_skr_bps > 0)) fail(Errc::config, "mean_skr_bps must be positive");
    if (block_size_bits <= 0 || block_size_bits % 8 != 0) {
        fail(Errc::config, "block_size_bits must be a positive multiple of 8");
    }
    if (blocks_per_burst <= 0) fail(Errc::config, "blocks_per_burst must be positive");
    if (buffer_capacity_keys <= 0) fail(Errc::config, "buffer_capacity_keys must be positive");
    if (initial_keys < -1 || initial_keys > buffer_capacity_keys) {
        fail(Errc::config, "initial_keys must be -1 or within the buffer capacity");
    }
    if (!(latency_median_ms >= 0) || !(latency_sigma >= 0)) fail(Errc::config, "latency parameters must be >= 0");
}

nlohmann::json to_json(const LinkProfile& p) {
    return {{"mean_skr_bps", p.mean_skr_bps},
            {"block_size_bits", p.block_size_bits},
            {"blocks_per_burst", p.blocks_per_burst},
            {"buffer_capacity_keys", p.buffer_capacity_keys},
            {"initial_keys", p.initial_keys},
            {"latency_median_ms", p.latency_median_ms},
            {"latency_sigma", p.latency_sigma}};
}

LinkProfile link_profile_from_json(const nlohmann::json& j) {
    if (!j.is_object()) fail(Errc::config, "link profile must be an object");
    LinkProfile p;
    try {
        p.mean_skr_bps = j.value("mean_skr_bps", p.mean_skr_bps);
        p.block_size_bits = j.value("block_size_bits", p.block_size_bits);
        p.latency_sigma = j.value("latency_sigma", p.latency_sigma);
        if (!j.contains("latency_median_ms")) {
            p = LinkProfile::calibrated(p.mean_skr_bps, p.latency_sigma, p.block_size_bits);
        } else {
            p.latency_median_ms = j.at("latency_median_ms").get<double>();
        }
        p.blocks_per_burst = j.value("blocks_per_burst", p.blocks_per_burst);
        p.buffer_capacity_keys = j.value("buffer_capacity_keys", p.buffer_capacity_keys);
        p.initial_keys = j.value("initial_keys", p.initial_keys);
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::config, std::string("bad link profile: ") + e.what());
    }
    p.validate();
    return p;
}

}  // namespace kmstn
