#include "kmstn/presets.hpp"

#include "kmstn/error.hpp"

namespace kmstn::presets {

config::Bundle chain(const ChainOptions& o) {
    if (o.nodes <= 0 || o.nodes % 2 != 0) fail(Errc::config, "chain needs a positive even node count");
    auto port = [&](int i, int offset) -> std::uint16_t {
        return o.base_port == 0 ? 0 : static_cast<std::uint16_t>(o.base_port + 10 * i + offset);
    };
    config::Bundle b;
    b.deployment.insecure_sim = o.insecure_sim;
    for (int i = 1; i <= o.nodes; ++i) {
        const int island = (i + 1) / 2;
        const int peer = i % 2 ? i + 1 : i - 1;
        const double skr = o.slow_islands.count(island) ? o.slow_skr_bps : o.fast_skr_bps;
        config::QkdNodeConfig q;
        q.kme_id = KmeId(kme_name(i));
        q.endpoint = {o.host, port(i, 2)};
        q.master_sae_id = SaeId(sae_name(i));
        q.slave_sae_id = SaeId(sae_name(peer));
        q.peer_kme_id = KmeId(kme_name(peer));
        q.link = LinkProfile::calibrated(skr);
        q.seed = o.seed * 1000 + static_cast<std::uint64_t>(island);
        b.qkd_nodes.push_back(q);

        config::KmstnConfig k;
        k.kmstn_id = kmstn_name(i);
        k.endpoint = {o.host, port(i, 0)};
        k.pqc_endpoint = {o.host, port(i, 1)};
        k.attached_kmes = {q.kme_id};
        k.bound_saes = {q.master_sae_id};
        k.state_dir = o.state_root / k.kmstn_id;
        b.kmstns.push_back(k);

        b.saes.push_back({q.master_sae_id, k.kmstn_id, std::nullopt});
        if (i > 1) b.edges.push_back({kmstn_name(i - 1), kmstn_name(i), i % 2 == 0, 1.0});
    }
    return b;
}

}  // namespace kmstn::presets
