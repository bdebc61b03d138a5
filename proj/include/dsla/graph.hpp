// Immutable attributed undirected graph plus neighborhood queries and
// k-hop subgraph extraction.
#pragma once

#include <algorithm>
#include <cstdint>
#include <queue>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "dsla/errors.hpp"

namespace dsla {

// Unordered node pair stored canonically as (min, max).
struct Edge {
    int u = 0;
    int v = 0;

    Edge() = default;
    Edge(int a, int b) : u(std::min(a, b)), v(std::max(a, b)) {}

    friend bool operator==(const Edge&, const Edge&) = default;
    friend auto operator<=>(const Edge&, const Edge&) = default;
};

inline std::uint64_t edge_key(int u, int v) {
    if (u > v) std::swap(u, v);
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(u)) << 32) |
           static_cast<std::uint32_t>(v);
}

/// Immutable undirected graph with categorical node/edge attributes.
/// Attribute IDs live in [0, vocab); the value `vocab` itself is the reserved
/// MASK ID, so embedding tables are sized vocab+1 and masking never aliases a
/// real attribute. Construction validates all invariants and precomputes
/// adjacency; instances are safely shareable across threads.
class Graph {
public:
    Graph() = default;

    Graph(int num_nodes, std::vector<Edge> edges, std::vector<int> node_attrs,
          std::vector<int> edge_attrs, int node_vocab, int edge_vocab)
        : num_nodes_(num_nodes),
          edges_(std::move(edges)),
          node_attrs_(std::move(node_attrs)),
          edge_attrs_(std::move(edge_attrs)),
          node_vocab_(node_vocab),
          edge_vocab_(edge_vocab) {
        validate();
        build_index();
    }

    int num_nodes() const { return num_nodes_; }
    int num_edges() const { return static_cast<int>(edges_.size()); }
    const std::vector<Edge>& edges() const { return edges_; }
    const std::vector<int>& node_attrs() const { return node_attrs_; }
    const std::vector<int>& edge_attrs() const { return edge_attrs_; }
    int node_vocab() const { return node_vocab_; }
    int edge_vocab() const { return edge_vocab_; }

    int node_mask_id() const { return node_vocab_; }
    int edge_mask_id() const { return edge_vocab_; }

    int node_attr(int v) const {
        check_node(v);
        return node_attrs_[v];
    }

    bool has_edge(int u, int v) const {
        return u != v && edge_set_.count(edge_key(u, v)) > 0;
    }

    /// Sorted, duplicate-free neighbor list of v.
    const std::vector<int>& neighbors(int v) const {
        check_node(v);
        return adjacency_[v];
    }

    int degree(int v) const { return static_cast<int>(neighbors(v).size()); }

    /// Copy of this graph with different node attributes (same structure).
    Graph with_node_attrs(std::vector<int> attrs) const {
        return Graph(num_nodes_, edges_, std::move(attrs), edge_attrs_, node_vocab_, edge_vocab_);
    }

    friend bool operator==(const Graph& a, const Graph& b) {
        return a.num_nodes_ == b.num_nodes_ && a.edges_ == b.edges_ &&
               a.node_attrs_ == b.node_attrs_ && a.edge_attrs_ == b.edge_attrs_ &&
               a.node_vocab_ == b.node_vocab_ && a.edge_vocab_ == b.edge_vocab_;
    }

private:
    void check_node(int v) const {
        if (v < 0 || v >= num_nodes_)
            throw std::out_of_range("node index " + std::to_string(v) + " out of range [0, " +
                                    std::to_string(num_nodes_) + ")");
    }

    void validate() {
        if (num_nodes_ < 0) throw std::invalid_argument("negative node count");
        if (node_vocab_ < 1 || edge_vocab_ < 1) throw std::invalid_argument("vocab must be >= 1");
        if (static_cast<int>(node_attrs_.size()) != num_nodes_)
            throw std::invalid_argument("node_attrs length != num_nodes");
        if (edge_attrs_.size() != edges_.size())
            throw std::invalid_argument("edge_attrs length != edge count");
        for (int a : node_attrs_)
            if (a < 0 || a > node_vocab_)  // vocab itself = MASK
                throw std::invalid_argument("node attribute out of vocab");
        for (int a : edge_attrs_)
            if (a < 0 || a > edge_vocab_)
                throw std::invalid_argument("edge attribute out of vocab");
        std::unordered_set<std::uint64_t> seen;
        seen.reserve(edges_.size() * 2);
        for (const Edge& e : edges_) {
            if (e.u == e.v) throw std::invalid_argument("self-loop rejected");
            if (e.u < 0 || e.v >= num_nodes_)
                throw std::invalid_argument("edge endpoint out of range");
            if (!seen.insert(edge_key(e.u, e.v)).second)
                throw std::invalid_argument("duplicate edge rejected");
        }
    }

    void build_index() {
        edge_set_.reserve(edges_.size() * 2);
        adjacency_.assign(num_nodes_, {});
        for (const Edge& e : edges_) {
            edge_set_.insert(edge_key(e.u, e.v));
            adjacency_[e.u].push_back(e.v);
            adjacency_[e.v].push_back(e.u);
        }
        for (auto& nbrs : adjacency_) std::sort(nbrs.begin(), nbrs.end());
    }

    int num_nodes_ = 0;
    std::vector<Edge> edges_;
    std::vector<int> node_attrs_;
    std::vector<int> edge_attrs_;
    int node_vocab_ = 1;
    int edge_vocab_ = 1;

    std::unordered_set<std::uint64_t> edge_set_;
    std::vector<std::vector<int>> adjacency_;
};

/// Sorted list of distinct node indices into a parent graph.
struct NodeSubset {
    std::vector<int> nodes;

    NodeSubset() = default;
    explicit NodeSubset(std::vector<int> n) : nodes(std::move(n)) {
        std::sort(nodes.begin(), nodes.end());
        nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
    }

    std::size_t size() const { return nodes.size(); }
    bool contains(int v) const {
        return std::binary_search(nodes.begin(), nodes.end(), v);
    }
};

inline std::vector<int> neighbors(const Graph& g, int v) { return g.neighbors(v); }

/// All nodes at shortest-path distance <= k from center, center included.
inline NodeSubset khop_subgraph(const Graph& g, int center, int k) {
    if (center < 0 || center >= g.num_nodes())
        throw std::out_of_range("khop_subgraph: center out of range");
    if (k < 0) throw std::invalid_argument("khop_subgraph: negative hop count");
    std::vector<int> dist(g.num_nodes(), -1);
    std::queue<int> frontier;
    dist[center] = 0;
    frontier.push(center);
    std::vector<int> found{center};
    while (!frontier.empty()) {
        int v = frontier.front();
        frontier.pop();
        if (dist[v] == k) continue;
        for (int u : g.neighbors(v)) {
            if (dist[u] < 0) {
                dist[u] = dist[v] + 1;
                found.push_back(u);
                frontier.push(u);
            }
        }
    }
    return NodeSubset(std::move(found));
}

/// Positions (into g.edges()) of all edges with both endpoints in `nodes`.
inline std::vector<int> induced_edge_ids(const Graph& g, const NodeSubset& nodes) {
    std::vector<int> out;
    for (int i = 0; i < g.num_edges(); ++i) {
        const Edge& e = g.edges()[i];
        if (nodes.contains(e.u) && nodes.contains(e.v)) out.push_back(i);
    }
    return out;
}

}  // namespace dsla
