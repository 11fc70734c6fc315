#include "kmstn/routing.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <queue>
#include <set>
#include <tuple>

#include "kmstn/error.hpp"

namespace kmstn::routing {

namespace {

constexpr double infinity = std::numeric_limits<double>::infinity();

using Dist = std::map<std::string, double>;

/// Single-source shortest distances. The graph is undirected, so running it
/// from `dst` also gives every node's distance to `dst`.
Dist dijkstra(const KmsGraph& g, const std::string& source) {
    Dist dist;
    for (const auto& [id, _] : g.nodes()) dist[id] = infinity;
    dist[source] = 0.0;
    using Item = std::pair<double, std::string>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> open;
    open.emplace(0.0, source);
    while (!open.empty()) {
        auto [d, u] = open.top();
        open.pop();
        if (d > dist[u]) continue;
        for (const auto& [v, w] : g.neighbors(u)) {
            const double nd = d + w;
            if (nd < dist[v]) {
                dist[v] = nd;
                open.emplace(nd, v);
            }
        }
    }
    return dist;
}

std::map<std::string, int> hop_counts(const KmsGraph& g, const std::string& dst) {
    std::map<std::string, int> hops{{dst, 0}};
    std::deque<std::string> frontier{dst};
    while (!frontier.empty()) {
        auto u = frontier.front();
        frontier.pop_front();
        for (const auto& [v, _] : g.neighbors(u)) {
            if (hops.emplace(v, hops[u] + 1).second) frontier.push_back(v);
        }
    }
    return hops;
}

}  // namespace

KmsGraph::KmsGraph(std::vector<KmsNode> nodes, std::vector<KmsEdge> edges) : edges_(std::move(edges)) {
    for (auto& n : nodes) {
        if (n.kmstn_id.empty()) fail(Errc::config, "empty kmstn_id");
        const auto id = n.kmstn_id;
        if (!nodes_.emplace(id, std::move(n)).second) fail(Errc::config, "duplicate kmstn_id " + id);
        adjacency_[id];
    }
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& e : edges_) {
        if (!has_node(e.a)) fail(Errc::config, "edge names unknown kmstn " + e.a);
        if (!has_node(e.b)) fail(Errc::config, "edge names unknown kmstn " + e.b);
        if (e.a == e.b) fail(Errc::config, "self-loop edge at " + e.a);
        if (!(e.weight > 0) || !std::isfinite(e.weight)) {
            fail(Errc::config, "edge " + e.a + "-" + e.b + " needs a positive finite weight");
        }
        if (!seen.insert(std::minmax(e.a, e.b)).second) fail(Errc::config, "duplicate edge " + e.a + "-" + e.b);
        adjacency_[e.a].emplace_back(e.b, e.weight);
        adjacency_[e.b].emplace_back(e.a, e.weight);
    }
    for (auto& [_, list] : adjacency_) std::sort(list.begin(), list.end());
    next_hop_ = compute_routes(*this);
}

const KmsNode& KmsGraph::node(const std::string& id) const {
    auto it = nodes_.find(id);
    if (it == nodes_.end()) fail(Errc::not_found, "unknown kmstn " + id);
    return it->second;
}

const KmsEdge* KmsGraph::edge(const std::string& a, const std::string& b) const {
    for (const auto& e : edges_) {
        if ((e.a == a && e.b == b) || (e.a == b && e.b == a)) return &e;
    }
    return nullptr;
}

const std::vector<std::pair<std::string, double>>& KmsGraph::neighbors(const std::string& id) const {
    auto it = adjacency_.find(id);
    if (it == adjacency_.end()) fail(Errc::not_found, "unknown kmstn " + id);
    return it->second;
}

std::optional<std::string> KmsGraph::next_hop(const std::string& src, const std::string& dst) const {
    auto it = next_hop_.find({src, dst});
    if (it == next_hop_.end()) return std::nullopt;
    return it->second;
}

KmsGraph load_topology(const config::Bundle& bundle) {
    bundle.validate();
    std::vector<KmsNode> nodes;
    for (const auto& k : bundle.kmstns) {
        KmsNode n{k.kmstn_id, k.endpoint, k.pqc_endpoint, {}, k.bound_saes};
        for (const auto& id : k.attached_kmes) {
            const auto* q = bundle.find_qkd_node(id);
            n.attached_kmes.push_back({q->kme_id, q->master_sae_id, q->slave_sae_id, q->peer_kme_id, q->endpoint});
        }
        nodes.push_back(std::move(n));
    }
    std::vector<KmsEdge> edges;
    for (const auto& e : bundle.edges) edges.push_back({e.a, e.b, e.qkd_link, e.weight});
    return KmsGraph(std::move(nodes), std::move(edges));
}

NextHopTable compute_routes(const KmsGraph& graph) {
    NextHopTable table;
    for (const auto& [dst, _] : graph.nodes()) {
        const auto dist = dijkstra(graph, dst);
        for (const auto& [src, d] : dist) {
            if (src == dst || d == infinity) continue;
            // Neighbours are sorted, so the first one on a shortest route is
            // the smallest id.
            for (const auto& [n, w] : graph.neighbors(src)) {
                const double dn = dist.at(n);
                if (dn < d && dn + w == d) {
                    table.emplace(std::make_pair(src, dst), n);
                    break;
                }
            }
        }
    }
    return table;
}

std::vector<std::string> route_fallback(const KmsGraph& graph, const std::string& src, const std::string& dst) {
    if (!graph.has_node(src)) fail(Errc::unreachable, "unknown kmstn " + src);
    if (!graph.has_node(dst)) fail(Errc::unreachable, "unknown kmstn " + dst);
    if (src == dst) return {src};

    double min_weight = infinity;
    for (const auto& e : graph.edges()) min_weight = std::min(min_weight, e.weight);
    const auto hops = hop_counts(graph, dst);
    if (!hops.count(src)) fail(Errc::unreachable, "no route from " + src + " to " + dst);
    auto h = [&](const std::string& v) { return hops.at(v) * min_weight; };

    std::map<std::string, double> g{{src, 0.0}};
    std::map<std::string, std::string> parent;
    std::set<std::string> closed;
    using Item = std::tuple<double, double, std::string>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> open;
    open.emplace(h(src), 0.0, src);
    while (!open.empty()) {
        auto [f, gu, u] = open.top();
        open.pop();
        if (closed.count(u)) continue;
        closed.insert(u);
        if (u == dst) break;
        for (const auto& [v, w] : graph.neighbors(u)) {
            if (closed.count(v) || !hops.count(v)) continue;
            const double gv = gu + w;
            auto it = g.find(v);
            if (it == g.end() || gv < it->second) {
                g[v] = gv;
                parent[v] = u;
                open.emplace(gv + h(v), gv, v);
            }
        }
    }
    std::vector<std::string> path{dst};
    while (path.back() != src) path.push_back(parent.at(path.back()));
    std::reverse(path.begin(), path.end());
    return path;
}

std::vector<std::string> follow_next_hops(const KmsGraph& graph, const std::string& src, const std::string& dst) {
    std::vector<std::string> path{src};
    while (path.back() != dst) {
        auto next = graph.next_hop(path.back(), dst);
        if (!next) fail(Errc::unreachable, "no route from " + src + " to " + dst);
        if (path.size() > graph.nodes().size()) fail(Errc::internal, "next-hop cycle towards " + dst);
        path.push_back(*next);
    }
    return path;
}

double path_weight(const KmsGraph& graph, const std::vector<std::string>& path) {
    double total = 0.0;
    for (std::size_t i = 1; i < path.size(); ++i) {
        const auto* e = graph.edge(path[i - 1], path[i]);
        if (!e) fail(Errc::invariant, "no edge " + path[i - 1] + "-" + path[i]);
        total += e->weight;
    }
    return total;
}

std::string resolve_destination(const KmsGraph& graph, const SaeId& sae) {
    std::vector<std::string> hits;
    for (const auto& [id, n] : graph.nodes()) {
        if (std::find(n.bound_master_saes.begin(), n.bound_master_saes.end(), sae) != n.bound_master_saes.end()) {
            hits.push_back(id);
        }
    }
    if (hits.empty()) fail(Errc::unknown_sae, "sae " + sae.str() + " is not bound at any kmstn");
    if (hits.size() > 1) fail(Errc::ambiguous_binding, "sae " + sae.str() + " is bound at several kmstns");
    return hits.front();
}

}  // namespace kmstn::routing
