#include <gtest/gtest.h>

#include <atomic>
#include <set>
#include <thread>

#include "kmstn/error.hpp"
#include "kmstn/qkd_sim.hpp"

using namespace kmstn;
using namespace kmstn::sim;

namespace {

Errc code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error thrown";
    return Errc::internal;
}

LinkProfile profile(std::int64_t capacity, std::int64_t initial, double skr = 2500) {
    auto p = LinkProfile::calibrated(skr);
    p.buffer_capacity_keys = capacity;
    p.initial_keys = initial;
    return p;
}

config::QkdNodeConfig side(const std::string& me, const std::string& peer, LinkProfile link) {
    config::QkdNodeConfig c;
    c.kme_id = KmeId("kme-" + me);
    c.peer_kme_id = KmeId("kme-" + peer);
    c.master_sae_id = SaeId("sae-" + me);
    c.slave_sae_id = SaeId("sae-" + peer);
    c.endpoint = {"127.0.0.1", 0};
    c.link = link;
    c.seed = 42;
    return c;
}

}  // namespace

TEST(QkdPairTest, SameSeedSameSequence) {
    auto run = [] {
        auto clock = std::make_shared<ManualClock>();
        QkdPair pair(profile(20, 5), 99, clock);
        std::vector<KeyBlock> out;
        for (int i = 0; i < 40; ++i) {
            clock->advance(from_millis(300));
            try {
                for (auto& k : pair.enc_keys(1, 256).keys) out.push_back(k);
            } catch (const Error&) {
            }
        }
        return out;
    };
    const auto a = run();
    EXPECT_GT(a.size(), 20u);
    EXPECT_EQ(a, run());
    QkdPair other(profile(20, 5), 100, std::make_shared<ManualClock>());
    EXPECT_NE(other.enc_keys(1, 256).keys[0], a[0]);
}

TEST(QkdPairTest, GeneratedRateTracksProfile) {
    {
        auto clock = std::make_shared<ManualClock>();
        QkdPair pair(profile(1'000'000, 0, 2500), 3, clock);
        clock->advance(std::chrono::seconds(60));
        const double rate = pair.generated_bits() / 60.0;
        EXPECT_GE(rate, 2000.0);
        EXPECT_LE(rate, 3000.0);
    }
    for (double skr : {2500.0, 500.0}) {
        for (std::uint64_t seed = 1; seed <= 10; ++seed) {
            auto clock = std::make_shared<ManualClock>();
            QkdPair pair(profile(1'000'000, 0, skr), seed, clock);
            clock->advance(std::chrono::seconds(600));
            EXPECT_NEAR(pair.generated_bits() / 600.0, skr, 0.2 * skr) << skr << " seed " << seed;
        }
    }
    auto c1 = std::make_shared<ManualClock>();
    auto c2 = std::make_shared<ManualClock>();
    QkdPair fast(profile(1'000'000, 0, 2500), 5, c1), slow(profile(1'000'000, 0, 500), 5, c2);
    c1->advance(std::chrono::seconds(600));
    c2->advance(std::chrono::seconds(600));
    const double ratio = static_cast<double>(fast.generated_bits()) / static_cast<double>(slow.generated_bits());
    EXPECT_GT(ratio, 4.0);
    EXPECT_LT(ratio, 6.0);
}

TEST(QkdPairTest, CountingAndAtomicDepletion) {
    auto clock = std::make_shared<ManualClock>();
    QkdPair pair(profile(10, -1), 1, clock);
    EXPECT_EQ(pair.stored(), 10);
    EXPECT_EQ(pair.enc_keys(1, 256).keys.size(), 1u);
    EXPECT_EQ(pair.stored(), 9);
    pair.pause_generation(true);
    pair.drain();
    EXPECT_EQ(code_of([&] { pair.enc_keys(1, 256); }), Errc::depleted);
    pair.fill_to_capacity();
    for (int i = 0; i < 7; ++i) pair.enc_keys(1, 256);
    EXPECT_EQ(pair.stored(), 3);
    EXPECT_EQ(code_of([&] { pair.enc_keys(5, 256); }), Errc::depleted);
    EXPECT_EQ(pair.stored(), 3);
    EXPECT_EQ(pair.enc_keys(3, 256).keys.size(), 3u);
}

TEST(QkdPairTest, PausedOrFullBufferGeneratesNothing) {
    auto clock = std::make_shared<ManualClock>();
    QkdPair full(profile(10, -1), 1, clock);
    QkdPair paused(profile(10, 0), 1, clock);
    paused.pause_generation(true);
    clock->advance(std::chrono::seconds(100));
    EXPECT_EQ(full.generated_bits(), 0u);
    EXPECT_EQ(paused.stored(), 0);
    paused.pause_generation(false);
    clock->advance(std::chrono::seconds(100));
    EXPECT_EQ(paused.stored(), 10);
}

TEST(QkdPairTest, SizesAndMirror) {
    QkdPair pair(profile(50, -1), 1, std::make_shared<ManualClock>());
    auto k = pair.enc_keys(2, 128);
    ASSERT_EQ(k.keys.size(), 2u);
    EXPECT_EQ(k.keys[0].size_bits(), 128u);
    EXPECT_EQ(pair.dec_keys({k.keys[1].key_id, k.keys[0].key_id}).keys,
              (std::vector<KeyBlock>{k.keys[1], k.keys[0]}));
    EXPECT_EQ(code_of([&] { pair.enc_keys(1, 512); }), Errc::bad_request);
    EXPECT_EQ(code_of([&] { pair.enc_keys(1, 12); }), Errc::bad_request);
    EXPECT_EQ(code_of([&] { pair.enc_keys(0, 256); }), Errc::bad_request);
    EXPECT_EQ(code_of([&] { pair.dec_keys({}); }), Errc::bad_request);
}

TEST(QkdPairTest, UnknownIdsAreNamed) {
    QkdPair pair(profile(50, -1), 1, std::make_shared<ManualClock>());
    const auto known = pair.enc_keys(1, 256).keys[0].key_id;
    try {
        pair.dec_keys({known, "00000000-0000-4000-8000-000000000001", "00000000-0000-4000-8000-000000000002"});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::key_not_present);
        const std::string msg = e.what();
        EXPECT_NE(msg.find("000000000001"), std::string::npos);
        EXPECT_NE(msg.find("000000000002"), std::string::npos);
        EXPECT_EQ(msg.find(known), std::string::npos);
    }
}

TEST(QkdPairTest, NoKeyDeliveredTwiceUnderConcurrency) {
    auto p = profile(50, -1);
    QkdPair pair(p, 1, std::make_shared<ManualClock>());
    pair.pause_generation(true);
    std::atomic<int> ok{0}, depleted{0};
    std::mutex mu;
    std::set<std::string> ids;
    std::vector<std::thread> threads;
    for (int i = 0; i < 100; ++i) {
        threads.emplace_back([&] {
            try {
                auto k = pair.enc_keys(1, 256);
                std::lock_guard lock(mu);
                EXPECT_TRUE(ids.insert(k.keys[0].key_id).second);
                ++ok;
            } catch (const Error& e) {
                EXPECT_EQ(e.code(), Errc::depleted);
                ++depleted;
            }
        });
    }
    for (auto& t : threads) t.join();
    EXPECT_EQ(ok, 50);
    EXPECT_EQ(depleted, 50);
}

TEST(QkdPairTest, LatencyFollowsProfileMedian) {
    QkdPair pair(profile(10, -1, 500), 8, std::make_shared<ManualClock>());
    std::vector<double> samples;
    for (int i = 0; i < 4001; ++i) samples.push_back(pair.sample_latency_ms());
    std::nth_element(samples.begin(), samples.begin() + 2000, samples.end());
    EXPECT_NEAR(samples[2000], pair.profile().latency_median_ms, 0.03 * pair.profile().latency_median_ms);
}

TEST(QkdNodeServerTest, ServesBothSidesOverHttp) {
    auto clock = std::make_shared<ManualClock>();
    auto running = run_pair(side("a", "b", profile(10, -1)), side("b", "a", profile(10, -1)), true, clock,
                            LatencyMode::report);
    http::Client a({"127.0.0.1", running.alice->port()}, {.identity = "kmstn-a"});
    http::Client b({"127.0.0.1", running.bob->port()}, {.identity = "kmstn-b"});

    auto st = etsi014::decode_status(a.get("/api/v1/keys/sae-b/status").body);
    EXPECT_EQ(st.stored_key_count, 10);
    EXPECT_EQ(st.source_kme_id, "kme-a");
    EXPECT_EQ(st.target_kme_id, "kme-b");

    auto resp = a.post("/api/v1/keys/sae-b/enc_keys", etsi014::encode(etsi014::KeyRequest{}));
    ASSERT_EQ(resp.status, 200);
    EXPECT_GT(std::stod(resp.header(http::sim_latency_header)), 0.0);
    const auto issued = decode_key_container(resp.body, 256);

    auto back = b.post("/api/v1/keys/sae-a/dec_keys", etsi014::encode(etsi014::KeyIdsRequest{{issued.keys[0].key_id}}));
    ASSERT_EQ(back.status, 200);
    EXPECT_EQ(decode_key_container(back.body), issued);
    EXPECT_EQ(etsi014::decode_status(b.get("/api/v1/keys/sae-a/status").body).stored_key_count, 9);

    etsi014::KeyRequest multi;
    multi.additional_slave_sae_ids = {SaeId("sae-remote")};
    EXPECT_EQ(a.post("/api/v1/keys/sae-b/enc_keys", etsi014::encode(multi)).status, 400);
    EXPECT_EQ(a.get("/api/v1/keys/sae-zzz/status").status, 404);
    EXPECT_EQ(b.post("/api/v1/keys/sae-a/dec_keys",
                     etsi014::encode(etsi014::KeyIdsRequest{{"00000000-0000-4000-8000-000000000009"}}))
                  .status,
              404);

    auto control = a.post("/sim/v1/control", R"({"paused":true,"drain":true})");
    EXPECT_EQ(nlohmann::json::parse(control.body)["stored_key_count"], 0);
    EXPECT_EQ(a.post("/api/v1/keys/sae-b/enc_keys", etsi014::encode(etsi014::KeyRequest{})).status, 503);

    const auto log = running.alice->request_log();
    ASSERT_GE(log.size(), 3u);
    EXPECT_EQ(log.front().caller, "kmstn-a");
    running.stop();
}
