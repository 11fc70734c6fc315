#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "kmstn/config.hpp"
#include "kmstn/model.hpp"
#include "kmstn/net.hpp"

namespace kmstn::routing {

struct AttachedKme {
    KmeId kme_id;
    SaeId master_sae_id;
    SaeId slave_sae_id;
    KmeId peer_kme_id;
    net::Endpoint endpoint;

    bool operator==(const AttachedKme&) const = default;
};

struct KmsNode {
    std::string kmstn_id;
    net::Endpoint service_endpoint;
    net::Endpoint pqc_endpoint;
    std::vector<AttachedKme> attached_kmes;
    std::vector<SaeId> bound_master_saes;

    bool operator==(const KmsNode&) const = default;
};

struct KmsEdge {
    std::string a;
    std::string b;
    bool qkd_link = false;
    double weight = 1.0;

    bool operator==(const KmsEdge&) const = default;
};

using NextHopTable = std::map<std::pair<std::string, std::string>, std::string>;

/// Immutable overlay graph with its next-hop table computed at construction.
class KmsGraph {
public:
    KmsGraph() = default;
    /// Throws Error(Errc::config) on duplicate ids, dangling or duplicate
    /// edges, self-loops and non-positive weights.
    KmsGraph(std::vector<KmsNode> nodes, std::vector<KmsEdge> edges);

    const std::map<std::string, KmsNode>& nodes() const noexcept { return nodes_; }
    const std::vector<KmsEdge>& edges() const noexcept { return edges_; }
    bool has_node(const std::string& id) const { return nodes_.count(id) != 0; }
    /// Throws Error(Errc::not_found).
    const KmsNode& node(const std::string& id) const;
    const KmsEdge* edge(const std::string& a, const std::string& b) const;
    /// Neighbours with edge weights, ordered by id.
    const std::vector<std::pair<std::string, double>>& neighbors(const std::string& id) const;

    const NextHopTable& next_hops() const noexcept { return next_hop_; }
    std::optional<std::string> next_hop(const std::string& src, const std::string& dst) const;

private:
    std::map<std::string, KmsNode> nodes_;
    std::vector<KmsEdge> edges_;
    std::map<std::string, std::vector<std::pair<std::string, double>>> adjacency_;
    NextHopTable next_hop_;
};

/// Builds the graph from a validated bundle.
KmsGraph load_topology(const config::Bundle& bundle);

/// Shortest-path next hops for every connected ordered pair; among equally
/// short routes the lexicographically smallest next hop wins.
NextHopTable compute_routes(const KmsGraph& graph);

/// On-demand A* search. Throws Error(Errc::unreachable).
std::vector<std::string> route_fallback(const KmsGraph& graph, const std::string& src, const std::string& dst);

/// Path obtained by following the next-hop table. Throws Error(Errc::unreachable).
std::vector<std::string> follow_next_hops(const KmsGraph& graph, const std::string& src, const std::string& dst);

/// Sum of edge weights, accumulated from the first node onward.
double path_weight(const KmsGraph& graph, const std::vector<std::string>& path);

/// The single node binding `sae` as a master SAE. Throws
/// Error(Errc::unknown_sae) or Error(Errc::ambiguous_binding).
std::string resolve_destination(const KmsGraph& graph, const SaeId& sae);

}  // namespace kmstn::routing
