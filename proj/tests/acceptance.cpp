#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "kmstn/bench.hpp"
#include "kmstn/crypto.hpp"
#include "kmstn/error.hpp"
#include "kmstn/etsi014.hpp"
#include "kmstn/kem_channel.hpp"
#include "kmstn/keystore.hpp"
#include "kmstn/log.hpp"
#include "kmstn/mesh.hpp"
#include "kmstn/presets.hpp"
#include "kmstn/routing.hpp"
#include "support/generators.hpp"
#include "support/graphs.hpp"
#include "support/tamper_proxy.hpp"
#include "support/temp_dir.hpp"

// Runs every end-to-end acceptance check against in-process deployments and
// prints one PASS/FAIL line per check. Exit status is the number of failures.
namespace kmstn {
namespace {

using presets::kmstn_name;

struct Outcome {
    bool pass = false;
    std::string detail;
};

SaeId sae(int i) { return SaeId(presets::sae_name(i)); }
KmeId kme(int i) { return KmeId(presets::kme_name(i)); }

etsi014::KeyRequest request(int number, std::vector<SaeId> extra = {}) {
    etsi014::KeyRequest r;
    r.number = number;
    r.additional_slave_sae_ids = std::move(extra);
    return r;
}

std::optional<Errc> error_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return std::nullopt;
}

class Deployment {
public:
    explicit Deployment(const fixtures::TempDir& tmp, std::function<void(config::Bundle&)> edit = {},
                        std::function<void(config::Bundle&)> patch = {}) {
        presets::ChainOptions o;
        o.state_root = tmp / ("state-" + std::to_string(counter_++));
        auto bundle = presets::chain(o);
        if (edit) edit(bundle);
        mesh::MeshOptions m;
        m.clock = clock;
        m.service.seal.device_secret_path = tmp / "device.secret";
        m.service.ack_backoff = std::chrono::milliseconds(10);
        m.patch = std::move(patch);
        mesh = std::make_unique<mesh::Mesh>(std::move(bundle), std::move(m));
    }

    service::KmstnService& node(int i) { return mesh->kmstn(kmstn_name(i)); }

    bench::MetricsRecord run(bench::Kind kind, int src, int dst, int n = 100, int concurrency = 1, int epochs = 1) {
        bench::ExperimentSpec s;
        s.kind = kind;
        s.src = kmstn_name(src);
        s.dst = kmstn_name(dst);
        s.n_requests = n;
        s.concurrency = concurrency;
        s.epochs = epochs;
        bench::Harness h(clock);
        return h.run(s, bench::deployment_source(mesh->bundle(), s, clock));
    }

    std::shared_ptr<ManualClock> clock = std::make_shared<ManualClock>();
    std::unique_ptr<mesh::Mesh> mesh;

private:
    static inline int counter_ = 0;
};

Outcome relay_integrity(const fixtures::TempDir& tmp) {
    const auto started = std::chrono::steady_clock::now();
    Deployment d(tmp);
    std::vector<KeyBlock> sent;
    for (int i = 0; i < 10; ++i) {
        const auto c = d.node(1).get_key(sae(1), sae(2), request(10, {sae(8)}));
        sent.insert(sent.end(), c.keys.begin(), c.keys.end());
    }
    if (!d.mesh->wait_idle()) return {false, "relay queues did not drain"};
    int matched = 0;
    for (const auto& k : sent) {
        const auto got = d.node(8).get_key_with_ids(sae(8), sae(1), {k.key_id});
        if (got.keys.size() == 1 && got.keys[0] == k) ++matched;
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    std::ostringstream out;
    out << matched << "/" << sent.size() << " bit-identical at kmstn8 in " << seconds << " s";
    return {sent.size() == 100 && matched == 100 && seconds < 60.0, out.str()};
}

Outcome hybrid_hop_needs_both_keys(const fixtures::TempDir& tmp) {
    constexpr int relays = 50;
    auto attempt = [&](Deployment& d) {
        std::vector<std::string> ids;
        for (int i = 0; i < relays; ++i) {
            for (const auto& k : d.node(1).get_key(sae(1), sae(2), request(1, {sae(3)})).keys) ids.push_back(k.key_id);
        }
        d.mesh->wait_idle();
        int delivered = 0;
        for (const auto& id : ids) {
            if (!error_of([&] { d.node(3).get_key_with_ids(sae(3), sae(1), {id}); })) ++delivered;
        }
        return std::make_pair(delivered, d.node(2).stats().envelopes_rejected);
    };

    Deployment corrupted(tmp);
    corrupted.mesh->pair(kme(2)).corrupt_dec_keys(true);
    const auto [qkd_delivered, qkd_rejected] = attempt(corrupted);

    std::unique_ptr<fixtures::TamperProxy> proxy;
    Deployment tampered(tmp, {}, [&](config::Bundle& b) {
        for (auto& k : b.kmstns) {
            if (k.kmstn_id != kmstn_name(2)) continue;
            proxy = std::make_unique<fixtures::TamperProxy>(k.pqc_endpoint);
            k.pqc_endpoint = proxy->endpoint();
        }
    });
    proxy->arm(true);
    const auto [kem_delivered, kem_rejected] = attempt(tampered);
    const int flipped = proxy->tampered();
    tampered.mesh->stop();

    std::ostringstream out;
    out << "corrupt QKD key: " << qkd_delivered << "/" << relays << " delivered, " << qkd_rejected
        << " rejected; tampered KEM ciphertext: " << kem_delivered << "/" << relays << " delivered, " << kem_rejected
        << " rejected";
    const bool pass = qkd_delivered == 0 && kem_delivered == 0 && qkd_rejected == relays &&
                      kem_rejected == relays && flipped >= relays;
    return {pass, out.str()};
}

Outcome routing_matches_oracle() {
    std::mt19937_64 rng(2024);
    int pairs = 0;
    int dijkstra_mismatch = 0;
    int astar_mismatch = 0;
    for (int round = 0; round < 200; ++round) {
        const int n = 2 + static_cast<int>(rng() % 7);
        const auto g = fixtures::random_connected_graph(rng, n);
        for (const auto& [src, _] : g.nodes()) {
            for (const auto& [dst, __] : g.nodes()) {
                const auto oracle = fixtures::brute_force_min_weight(g, src, dst);
                const double table = routing::path_weight(g, routing::follow_next_hops(g, src, dst));
                const double astar = routing::path_weight(g, routing::route_fallback(g, src, dst));
                ++pairs;
                if (!oracle || table != *oracle) ++dijkstra_mismatch;
                if (astar != table) ++astar_mismatch;
            }
        }
    }
    std::ostringstream out;
    out << pairs << " ordered pairs over 200 graphs; Dijkstra vs exhaustive mismatches " << dijkstra_mismatch
        << ", A* vs Dijkstra mismatches " << astar_mismatch;
    return {dijkstra_mismatch == 0 && astar_mismatch == 0, out.str()};
}

Outcome keyrate_calibration(const fixtures::TempDir& tmp) {
    Deployment d(tmp);
    std::map<std::pair<int, int>, double> rates;
    for (auto [a, b] : std::vector<std::pair<int, int>>{{1, 2}, {2, 1}, {3, 4}, {4, 3}, {5, 6}, {6, 5}, {7, 8}, {8, 7}}) {
        rates[{a, b}] = d.run(bench::Kind::keyrate, a, b).aggregates.mean_keyrate_bps.value_or(0.0);
    }
    bool within = true;
    double slowest_fast = 1e300;
    double fastest_slow = 0.0;
    std::ostringstream out;
    for (const auto& [pair, rate] : rates) {
        const bool slow = pair.first == 5 || pair.first == 6;
        const double target = slow ? 500.0 : 2500.0;
        within &= std::abs(rate - target) <= 0.2 * target;
        if (slow) {
            fastest_slow = std::max(fastest_slow, rate);
        } else {
            slowest_fast = std::min(slowest_fast, rate);
        }
        out << pair.first << "->" << pair.second << " " << static_cast<long>(rate) << " bps; ";
    }
    out << "within 20%: " << (within ? "yes" : "no");
    return {within && fastest_slow < slowest_fast, out.str()};
}

Outcome delay_ordering(const fixtures::TempDir& tmp) {
    Deployment d(tmp);
    const double slow = d.run(bench::Kind::delay, 5, 6).aggregates.latency_median_ms.value_or(0.0);
    double fast_max = 0.0;
    for (int a : {1, 3, 7}) {
        fast_max = std::max(fast_max, d.run(bench::Kind::delay, a, a + 1).aggregates.latency_median_ms.value_or(1e300));
    }

    bench::Harness h(std::make_shared<ManualClock>());
    bench::ExperimentSpec s;
    s.kind = bench::Kind::delay;
    s.src = kmstn_name(1);
    s.dst = kmstn_name(2);
    s.n_requests = 5;
    const auto trace = h.run(s, bench::trace_source({100, 110, 90, 105, 100}));
    const double jitter = trace.aggregates.jitter_median_ms.value_or(-1.0);

    std::ostringstream out;
    out << "median 5->6 " << slow << " ms vs largest other " << fast_max << " ms; trace jitter median " << jitter;
    return {slow > 3.0 * fast_max && jitter == 12.5 && trace.aggregates.latency_median_ms == 100.0, out.str()};
}

Outcome depletion(const fixtures::TempDir& tmp) {
    auto small = [](config::Bundle& b) {
        for (auto& n : b.qkd_nodes) n.link.buffer_capacity_keys = 50;
    };
    Deployment paused(tmp, small);
    paused.mesh->pair(kme(1)).pause_generation(true);
    const auto epoch = paused.run(bench::Kind::concurrency, 1, 2, 1, 100);
    int depleted = 0;
    for (const auto& r : epoch.records) depleted += r.error == "depleted" ? 1 : 0;

    std::vector<double> sweep;
    for (int c : {1, 10, 50, 100}) {
        Deployment d(tmp, small);
        sweep.push_back(d.run(bench::Kind::concurrency, 1, 2, 1, c, 4).aggregates.error_rate);
    }
    const bool monotone = std::is_sorted(sweep.begin(), sweep.end());

    std::ostringstream out;
    out << epoch.aggregates.successes << " ok, " << depleted << " depleted; sweep error rates";
    for (double e : sweep) out << " " << e;
    return {epoch.aggregates.successes == 50 && depleted == 50 && epoch.records.size() == 100 && monotone, out.str()};
}

Outcome ack_after_commit(const fixtures::TempDir& tmp) {
    Deployment d(tmp);
    std::mutex mu;
    std::set<std::string> committed;
    int violations = 0;
    std::set<std::string> acked;
    auto& dest = d.node(8);
    dest.store().set_commit_observer([&](const std::string& id) {
        std::lock_guard lock(mu);
        committed.insert(id);
    });
    dest.set_ack_observer([&](const std::vector<AckContainer>& acks) {
        std::lock_guard lock(mu);
        for (const auto& a : acks) {
            for (const auto& id : a.key_ids) {
                if (!committed.contains(id)) ++violations;
                acked.insert(id);
            }
        }
    });
    std::vector<std::string> ids;
    for (int i = 0; i < 100; ++i) ids.push_back(d.node(1).get_key(sae(1), sae(2), request(1, {sae(8)})).keys.at(0).key_id);
    d.mesh->wait_idle();
    int confirmed = 0;
    for (const auto& id : ids) confirmed += d.node(1).ack_status(id) == AckStatus::relayed ? 1 : 0;

    std::ostringstream out;
    out << violations << " violations; " << acked.size() << " keys acked, " << confirmed << " confirmed at origin";
    return {violations == 0 && acked.size() == 100 && confirmed == 100, out.str()};
}

Outcome keystore_at_rest(const fixtures::TempDir& tmp) {
    const auto state = tmp / "keystore";
    keystore::SealOptions own;
    own.device_secret_path = tmp / "device-a" / "device.secret";
    std::vector<KeyBlock> keys;
    {
        auto seal = keystore::DeviceSeal::init(state, own);
        keystore::Keystore store(seal);
        for (int i = 0; i < 100; ++i) {
            keys.push_back(KeyBlock{crypto::uuid_v4(), crypto::random_bytes(32)});
            store.put_key(keys.back(), SaeId("owner"), {SaeId("target")});
        }
    }

    Bytes image;
    for (const auto& e : std::filesystem::recursive_directory_iterator(state)) {
        if (!e.is_regular_file()) continue;
        const auto b = keystore::read_file(e.path());
        image.insert(image.end(), b.begin(), b.end());
        image.push_back(0);
    }
    int leaked = 0;
    for (const auto& k : keys) {
        if (std::search(image.begin(), image.end(), k.key_material.begin(), k.key_material.end()) != image.end()) ++leaked;
    }

    keystore::SealOptions other;
    const auto foreign_secret = tmp / "device-b" / "device.secret";
    other.device_secret_path = foreign_secret;
    std::filesystem::create_directories(foreign_secret.parent_path());
    keystore::atomic_write(foreign_secret, crypto::random_bytes(32));
    const auto foreign = error_of([&] {
        auto seal = keystore::DeviceSeal::init(state, other);
        keystore::Keystore store(seal);
    });

    int recovered = 0;
    {
        auto seal = keystore::DeviceSeal::init(state, own);
        keystore::Keystore store(seal);
        for (const auto& k : keys) recovered += store.get_key(k.key_id, SaeId("target")) == k ? 1 : 0;
    }

    std::ostringstream out;
    out << leaked << " plaintext keys found at rest; foreign seal "
        << (foreign ? "rejected (" + std::string(to_string(*foreign)) + ")" : std::string("accepted")) << "; "
        << recovered << "/100 recovered";
    return {leaked == 0 && foreign.has_value() && recovered == 100, out.str()};
}

Outcome session_freshness(const fixtures::TempDir& tmp) {
    Deployment d(tmp);
    struct Seen {
        std::string sender;
        std::string path;
        EncryptedEnvelope envelope;
    };
    std::mutex mu;
    std::vector<Seen> seen;
    for (int i = 1; i <= 8; ++i) {
        d.node(i).set_envelope_observer([&, i](const std::string& path, const EncryptedEnvelope& e) {
            std::lock_guard lock(mu);
            seen.push_back({kmstn_name(i), path, e});
        });
    }
    // Seven relay hops and one ACK per request.
    for (int i = 0; i < 63; ++i) d.node(1).get_key(sae(1), sae(2), request(1, {sae(8)}));
    d.mesh->wait_idle();

    std::set<std::pair<std::string, Bytes>> pairs;
    std::set<std::string> sessions;
    for (const auto& s : seen) {
        pairs.emplace(s.envelope.session, s.envelope.iv);
        sessions.insert(s.envelope.session);
    }
    // Both ends of an exchange hold the secret and each takes it out once.
    std::size_t consumed = 0;
    bool bounded = true;
    for (int i = 1; i <= 8; ++i) {
        const auto& reg = d.node(i).sessions();
        consumed += reg.consumed_total();
        bounded &= reg.consumed_total() <= reg.stored_total();
    }

    // Replaying an accepted envelope must not open its session a second time.
    int replays_refused = 0;
    for (const auto& [sender, receiver] : std::vector<std::pair<int, int>>{{1, 2}, {2, 3}}) {
        const auto it = std::find_if(seen.begin(), seen.end(), [&](const Seen& s) {
            return s.sender == kmstn_name(sender) && s.path == "/api/v1/ext_keys";
        });
        if (it == seen.end()) continue;
        const auto code = error_of([&] { d.node(receiver).handle_ext_keys(kmstn_name(sender), it->envelope); });
        replays_refused += code == Errc::already_consumed ? 1 : 0;
    }

    std::ostringstream out;
    out << seen.size() << " envelopes, " << pairs.size() << " distinct (session, iv), " << sessions.size()
        << " distinct sessions, " << consumed << " secrets consumed across both ends, " << replays_refused << "/2 replays refused";
    const bool pass = seen.size() >= 500 && pairs.size() == seen.size() && sessions.size() == seen.size() &&
                      consumed == 2 * seen.size() && bounded && replays_refused == 2;
    return {pass, out.str()};
}

Outcome wire_round_trip() {
    constexpr int n = 1000;
    fixtures::Gen gen(99);
    std::map<std::string, int> failures;
    for (int i = 0; i < n; ++i) {
        const auto e = gen.envelope();
        failures["envelope"] += decode_envelope(encode_envelope(e)) == e ? 0 : 1;
        const auto kc = gen.key_container();
        failures["key container"] += decode_key_container(encode_key_container(kc)) == kc ? 0 : 1;
        const auto ext = gen.ext_key_container();
        failures["ext key container"] += decode_ext_key_container(encode_ext_key_container(ext)) == ext ? 0 : 1;
        const auto acks = gen.ack_containers();
        failures["ack containers"] += decode_ack_containers(encode_ack_containers(acks)) == acks ? 0 : 1;
        const auto v = gen.void_request();
        failures["void request"] += decode_void_request(encode_void_request(v)) == v ? 0 : 1;

        etsi014::KeyRequest kr;
        kr.number = static_cast<int>(gen.range(1, 128));
        kr.size = static_cast<int>(gen.range(1, 64) * 8);
        for (std::size_t k = gen.range(0, 3); k > 0; --k) kr.additional_slave_sae_ids.push_back(gen.sae());
        kr.extension_mandatory = gen.extensions();
        kr.extension_optional = gen.extensions();
        failures["key request"] += etsi014::decode_key_request(etsi014::encode(kr)) == kr ? 0 : 1;

        kem::Frame f;
        f.kind = static_cast<kem::FrameKind>(gen.range(1, 4));
        f.session_id = gen.uuid();
        f.payload = gen.bytes(gen.range(0, 1600));
        const auto wire = kem::encode_frame(f);
        failures["kem frame"] += kem::decode_frame(ByteView(wire).subspan(4)) == f ? 0 : 1;
    }

    int missed_rejections = 0;
    for (int i = 0; i < n; ++i) {
        auto c = gen.ext_key_container();
        if (c.extension_mandatory.empty()) c.extension_mandatory.push_back(Extension{gen.text(1, 16), gen.value()});
        std::set<std::string> supported;
        for (const auto& e : c.extension_mandatory) {
            if (gen.range(0, 1)) supported.insert(e.name);
        }
        std::vector<std::string> expected;
        for (const auto& e : c.extension_mandatory) {
            if (!supported.contains(e.name)) expected.push_back(e.name);
        }
        try {
            validate_extensions(c, supported);
            missed_rejections += expected.empty() ? 0 : 1;
        } catch (const MandatoryExtensionError& e) {
            missed_rejections += e.unsupported() == expected ? 0 : 1;
        }
    }

    int total = 0;
    std::ostringstream out;
    for (const auto& [type, count] : failures) {
        total += count;
        out << type << " " << n - count << "/" << n << "; ";
    }
    out << "extension rejection mismatches " << missed_rejections;
    return {total == 0 && missed_rejections == 0, out.str()};
}

}  // namespace
}  // namespace kmstn

int main() {
    using namespace kmstn;
    log::set_min_level(log::Level::error);
    fixtures::TempDir tmp;
    const std::vector<std::pair<std::string, std::function<Outcome()>>> checks{
        {"end-to-end relay integrity", [&] { return relay_integrity(tmp); }},
        {"hybrid hop needs both keys", [&] { return hybrid_hop_needs_both_keys(tmp); }},
        {"routing oracle equivalence", [] { return routing_matches_oracle(); }},
        {"keyrate calibration", [&] { return keyrate_calibration(tmp); }},
        {"delay ordering", [&] { return delay_ordering(tmp); }},
        {"depletion behavior", [&] { return depletion(tmp); }},
        {"ack after store commit", [&] { return ack_after_commit(tmp); }},
        {"keystore at rest", [&] { return keystore_at_rest(tmp); }},
        {"session freshness", [&] { return session_freshness(tmp); }},
        {"wire round trip", [] { return wire_round_trip(); }},
    };
    int failed = 0;
    for (std::size_t i = 0; i < checks.size(); ++i) {
        Outcome o;
        try {
            o = checks[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        failed += o.pass ? 0 : 1;
        std::printf("%s criterion %zu: %s (%s)\n", o.pass ? "PASS" : "FAIL", i + 1, checks[i].first.c_str(),
                    o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(checks.size()) - failed, checks.size());
    return failed;
}
