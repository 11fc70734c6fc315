#include <gtest/gtest.h>

#include <random>

#include "kmstn/error.hpp"
#include "kmstn/presets.hpp"
#include "kmstn/routing.hpp"
#include "support/graphs.hpp"

using namespace kmstn;
using namespace kmstn::routing;

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

KmsNode bare(const std::string& id, std::vector<SaeId> saes = {}) { return {id, {}, {}, {}, std::move(saes)}; }

}  // namespace

TEST(Topology, ChainPresetHasSevenEdges) {
    auto g = load_topology(presets::chain());
    EXPECT_EQ(g.nodes().size(), 8u);
    ASSERT_EQ(g.edges().size(), 7u);
    int qkd = 0;
    for (const auto& e : g.edges()) qkd += e.qkd_link;
    EXPECT_EQ(qkd, 4);
    EXPECT_TRUE(g.edge("kmstn1", "kmstn2")->qkd_link);
    EXPECT_FALSE(g.edge("kmstn2", "kmstn3")->qkd_link);
    EXPECT_EQ(g.node("kmstn1").attached_kmes.at(0).peer_kme_id, KmeId("kme2"));
}

TEST(Topology, RejectsBadGraphs) {
    EXPECT_EQ(code_of([] { KmsGraph({bare("a"), bare("a")}, {}); }), Errc::config);
    EXPECT_EQ(code_of([] { KmsGraph({bare("a"), bare("b")}, {{"a", "c"}}); }), Errc::config);
    EXPECT_EQ(code_of([] { KmsGraph({bare("a")}, {{"a", "a"}}); }), Errc::config);
    EXPECT_EQ(code_of([] { KmsGraph({bare("a"), bare("b")}, {{"a", "b"}, {"b", "a"}}); }), Errc::config);
    EXPECT_EQ(code_of([] { KmsGraph({bare("a"), bare("b")}, {{"a", "b", false, 0.0}}); }), Errc::config);
    EXPECT_EQ(code_of([] { KmsGraph({bare("a"), bare("b")}, {{"a", "b", false, -1.0}}); }), Errc::config);
}

TEST(Routes, ChainNextHopIsForced) {
    auto g = load_topology(presets::chain());
    EXPECT_EQ(g.next_hop("kmstn1", "kmstn8"), "kmstn2");
    EXPECT_EQ(g.next_hop("kmstn8", "kmstn1"), "kmstn7");
    EXPECT_EQ(g.next_hop("kmstn4", "kmstn5"), "kmstn5");
    EXPECT_EQ(follow_next_hops(g, "kmstn1", "kmstn8").size(), 8u);
}

TEST(Routes, CompleteGraphGoesDirect) {
    std::vector<KmsNode> nodes;
    std::vector<KmsEdge> edges;
    for (char c = 'a'; c <= 'f'; ++c) nodes.push_back(bare(std::string(1, c)));
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        for (std::size_t j = i + 1; j < nodes.size(); ++j) edges.push_back({nodes[i].kmstn_id, nodes[j].kmstn_id});
    }
    KmsGraph g(nodes, edges);
    for (const auto& a : nodes) {
        for (const auto& b : nodes) {
            if (a.kmstn_id != b.kmstn_id) EXPECT_EQ(g.next_hop(a.kmstn_id, b.kmstn_id), b.kmstn_id);
        }
    }
}

TEST(Routes, TieBreakPrefersSmallestNextHop) {
    // Square a-b-d and a-c-d with equal weights.
    KmsGraph g({bare("a"), bare("c"), bare("b"), bare("d")}, {{"a", "c"}, {"c", "d"}, {"a", "b"}, {"b", "d"}});
    EXPECT_EQ(g.next_hop("a", "d"), "b");
    EXPECT_EQ(g.next_hop("d", "a"), "b");
}

TEST(Routes, WeightsOverrideHopCount) {
    KmsGraph g({bare("a"), bare("b"), bare("c")}, {{"a", "c", false, 5.0}, {"a", "b", false, 1.0}, {"b", "c", false, 1.0}});
    EXPECT_EQ(g.next_hop("a", "c"), "b");
    EXPECT_EQ(route_fallback(g, "a", "c"), (std::vector<std::string>{"a", "b", "c"}));
}

TEST(Routes, DisconnectedAndIdentity) {
    KmsGraph g({bare("a"), bare("b"), bare("c")}, {{"a", "b"}});
    EXPECT_FALSE(g.next_hop("a", "c"));
    EXPECT_EQ(code_of([&] { route_fallback(g, "a", "c"); }), Errc::unreachable);
    EXPECT_EQ(code_of([&] { follow_next_hops(g, "a", "c"); }), Errc::unreachable);
    EXPECT_EQ(route_fallback(g, "c", "c"), std::vector<std::string>{"c"});
    EXPECT_EQ(route_fallback(g, "a", "a"), std::vector<std::string>{"a"});
}

TEST(Routes, RandomGraphsMatchExhaustiveSearch) {
    std::mt19937_64 rng(7);
    for (int round = 0; round < 150; ++round) {
        const int n = 2 + static_cast<int>(rng() % 7);
        auto g = fixtures::random_connected_graph(rng, n);
        for (const auto& [src, _] : g.nodes()) {
            for (const auto& [dst, __] : g.nodes()) {
                const auto oracle = fixtures::brute_force_min_weight(g, src, dst);
                ASSERT_TRUE(oracle);
                const auto hops = follow_next_hops(g, src, dst);
                ASSERT_LE(hops.size(), g.nodes().size());
                EXPECT_EQ(path_weight(g, hops), *oracle);
                EXPECT_EQ(path_weight(g, route_fallback(g, src, dst)), *oracle);
            }
        }
    }
}

TEST(Routes, TableIsAPureFunctionOfTheGraph) {
    std::mt19937_64 a(11), b(11);
    auto g1 = fixtures::random_connected_graph(a, 8);
    auto g2 = fixtures::random_connected_graph(b, 8);
    EXPECT_EQ(g1.next_hops(), g2.next_hops());
    EXPECT_EQ(compute_routes(g1), g1.next_hops());
}

TEST(Resolve, BindingLookups) {
    KmsGraph g({bare("k1", {SaeId("x")}), bare("k8", {SaeId("dst"), SaeId("twice")}), bare("k9", {SaeId("twice")})}, {});
    EXPECT_EQ(resolve_destination(g, SaeId("dst")), "k8");
    EXPECT_EQ(code_of([&] { resolve_destination(g, SaeId("nobody")); }), Errc::unknown_sae);
    EXPECT_EQ(code_of([&] { resolve_destination(g, SaeId("twice")); }), Errc::ambiguous_binding);
    auto chain = load_topology(presets::chain());
    EXPECT_EQ(resolve_destination(chain, SaeId("sae8")), "kmstn8");
}
