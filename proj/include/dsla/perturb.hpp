// Graph perturbation with an exact edit ledger. Each perturbed graph is built
// by deleting/adding edges inside a sampled pool, so its edit distance to the
// original is the ledger size itself — no graph comparison is ever run. The
// brute-force exact_ged oracle (factorial search) lives here for tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <utility>
#include <vector>

#include "dsla/graph.hpp"
#include "dsla/rng.hpp"

namespace dsla {

struct PerturbConfig {
    int hop_k = 3;
    std::vector<double> ratios{0.2, 0.4, 0.6};
    double node_mask_ratio = 0.8;
    bool strong = false;               // extra record: strong_edge_ratio of all edges,
    double strong_edge_ratio = 0.8;    // strong_mask_ratio of all nodes
    double strong_mask_ratio = 0.8;
    double delete_prob = 0.5;          // delete-vs-add mix when both pools are non-empty
    bool whole_graph = false;          // link-prediction mode: pool is the entire graph
    bool strong_in_edit = true;        // include the strong record in the edit loss

    void validate() const {
        if (ratios.empty()) throw ConfigError("perturb: need at least one ratio");
        for (double r : ratios)
            if (r < 0.0 || r > 1.0) throw ConfigError("perturb: ratio outside [0,1]");
        if (node_mask_ratio < 0.0 || node_mask_ratio > 1.0)
            throw ConfigError("perturb: node_mask_ratio outside [0,1]");
        if (delete_prob < 0.0 || delete_prob > 1.0)
            throw ConfigError("perturb: delete_prob outside [0,1]");
        if (hop_k < 0) throw ConfigError("perturb: negative hop radius");
    }
};

struct PerturbationRecord {
    Graph graph;
    std::vector<Edge> deleted_edges;
    std::vector<Edge> added_edges;
    std::vector<int> added_edge_attrs;  // aligned with added_edges
    std::vector<int> masked_nodes;
    // |deleted| + |added|, written once at construction; reading it is O(1)
    // and never touches the graph.
    int edit_distance = 0;
    bool is_strong = false;
};

/// Replace the attribute of round(ratio * |pool|) distinct pool nodes with the
/// MASK id. Structure is untouched. `masked_out`, when given, receives the
/// chosen node indices (sorted).
inline Graph mask_nodes(const Graph& g, double ratio, const NodeSubset& pool, Rng& rng,
                        std::vector<int>* masked_out = nullptr) {
    if (ratio < 0.0 || ratio > 1.0) throw ConfigError("mask_nodes: ratio outside [0,1]");
    const auto k = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(pool.size())));
    std::vector<int> attrs = g.node_attrs();
    std::vector<int> masked;
    for (std::size_t pick : rng.sample_without_replacement(pool.size(), k)) {
        const int v = pool.nodes[pick];
        attrs[v] = g.node_mask_id();
        masked.push_back(v);
    }
    std::sort(masked.begin(), masked.end());
    if (masked_out) *masked_out = masked;
    return g.with_node_attrs(std::move(attrs));
}

namespace detail {

// Assemble the perturbed Graph and its record from an edit ledger.
inline PerturbationRecord make_record(const Graph& g, std::vector<Edge> deleted,
                                      std::vector<Edge> added, std::vector<int> added_attrs,
                                      std::vector<int> masked, std::vector<int> node_attrs) {
    std::set<Edge> gone(deleted.begin(), deleted.end());
    std::vector<Edge> edges;
    std::vector<int> attrs;
    for (int i = 0; i < g.num_edges(); ++i) {
        if (gone.count(g.edges()[i])) continue;
        edges.push_back(g.edges()[i]);
        attrs.push_back(g.edge_attrs()[i]);
    }
    for (std::size_t i = 0; i < added.size(); ++i) {
        edges.push_back(added[i]);
        attrs.push_back(added_attrs[i]);
    }
    // canonical order
    std::vector<std::size_t> perm(edges.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) { return edges[a] < edges[b]; });
    std::vector<Edge> sorted_edges;
    std::vector<int> sorted_attrs;
    for (std::size_t i : perm) {
        sorted_edges.push_back(edges[i]);
        sorted_attrs.push_back(attrs[i]);
    }
    PerturbationRecord rec;
    rec.graph = Graph(g.num_nodes(), std::move(sorted_edges), std::move(node_attrs),
                      std::move(sorted_attrs), g.node_vocab(), g.edge_vocab());
    rec.deleted_edges = std::move(deleted);
    rec.added_edges = std::move(added);
    rec.added_edge_attrs = std::move(added_attrs);
    rec.masked_nodes = std::move(masked);
    rec.edit_distance = static_cast<int>(rec.deleted_edges.size() + rec.added_edges.size());
    return rec;
}

inline int sample_edge_attr(const std::vector<double>& edge_dist, int edge_vocab, Rng& rng) {
    if (edge_dist.empty()) return static_cast<int>(rng.index(edge_vocab));
    return static_cast<int>(rng.categorical(edge_dist));
}

}  // namespace detail

/// One perturbed graph. A uniformly drawn center's k-hop subgraph defines the
/// perturbable pool (or the whole graph in whole-graph mode); ops =
/// max(1, round(ratio * pool edges)) edge deletions/additions, then node
/// masking over the same pool. Deleted edges can never be re-added, and added
/// edges are sampled from pairs absent in the original graph.
inline PerturbationRecord perturb(const Graph& g, double ratio, const PerturbConfig& cfg,
                                  const std::vector<double>& edge_dist, Rng& rng) {
    if (ratio < 0.0 || ratio > 1.0) throw ConfigError("perturb: ratio outside [0,1]");

    NodeSubset pool;
    if (cfg.whole_graph) {
        std::vector<int> all(g.num_nodes());
        std::iota(all.begin(), all.end(), 0);
        pool = NodeSubset(std::move(all));
    } else {
        if (g.num_nodes() == 0) throw PerturbInfeasible("perturb: empty graph");
        pool = khop_subgraph(g, static_cast<int>(rng.index(g.num_nodes())), cfg.hop_k);
    }

    std::vector<int> pool_edges = induced_edge_ids(g, pool);

    // identity perturbation (anchor construction / smoke mode)
    if (ratio == 0.0) {
        std::vector<int> masked;
        Graph masked_graph = mask_nodes(g, cfg.node_mask_ratio, pool, rng, &masked);
        return detail::make_record(g, {}, {}, {}, std::move(masked), masked_graph.node_attrs());
    }

    // candidate additions: node pairs inside the pool that are not edges of the
    // original graph (this also rules out re-adding this round's deletions)
    std::vector<Edge> addable;
    for (std::size_t i = 0; i < pool.size(); ++i)
        for (std::size_t j = i + 1; j < pool.size(); ++j)
            if (!g.has_edge(pool.nodes[i], pool.nodes[j]))
                addable.emplace_back(pool.nodes[i], pool.nodes[j]);

    if (pool_edges.empty() && addable.empty())
        throw PerturbInfeasible("perturb: pool has no edges and no addable pairs");

    const int target_ops =
        std::max(1, static_cast<int>(std::llround(ratio * static_cast<double>(pool_edges.size()))));

    std::vector<Edge> deletable;
    for (int idx : pool_edges) deletable.push_back(g.edges()[idx]);

    std::vector<Edge> deleted, added;
    std::vector<int> added_attrs;
    for (int op = 0; op < target_ops; ++op) {
        const bool can_delete = !deletable.empty();
        const bool can_add = !addable.empty();
        if (!can_delete && !can_add) break;  // capacity exhausted: honest ledger over forced ratio
        const bool do_delete = can_delete && (!can_add || rng.bernoulli(cfg.delete_prob));
        if (do_delete) {
            const std::size_t pick = rng.index(deletable.size());
            deleted.push_back(deletable[pick]);
            deletable[pick] = deletable.back();
            deletable.pop_back();
        } else {
            const std::size_t pick = rng.index(addable.size());
            added.push_back(addable[pick]);
            added_attrs.push_back(detail::sample_edge_attr(edge_dist, g.edge_vocab(), rng));
            addable[pick] = addable.back();
            addable.pop_back();
        }
    }

    std::vector<int> masked;
    Graph masked_graph = mask_nodes(g, cfg.node_mask_ratio, pool, rng, &masked);
    return detail::make_record(g, std::move(deleted), std::move(added), std::move(added_attrs),
                               std::move(masked), masked_graph.node_attrs());
}

struct PerturbationSet {
    Graph anchor;                       // original structure, masked attributes
    std::vector<int> anchor_masked;
    std::vector<PerturbationRecord> perturbed;
};

/// Anchor (masked original) plus one record per configured ratio, each with an
/// independent mask draw; plus one strong record when enabled.
inline PerturbationSet make_perturbation_set(const Graph& g, const PerturbConfig& cfg,
                                             const std::vector<double>& edge_dist, Rng& rng) {
    cfg.validate();
    PerturbationSet out;

    NodeSubset anchor_pool;
    if (cfg.whole_graph) {
        std::vector<int> all(g.num_nodes());
        std::iota(all.begin(), all.end(), 0);
        anchor_pool = NodeSubset(std::move(all));
    } else {
        if (g.num_nodes() == 0) throw PerturbInfeasible("empty graph");
        anchor_pool = khop_subgraph(g, static_cast<int>(rng.index(g.num_nodes())), cfg.hop_k);
    }
    out.anchor = mask_nodes(g, cfg.node_mask_ratio, anchor_pool, rng, &out.anchor_masked);

    for (double ratio : cfg.ratios) out.perturbed.push_back(perturb(g, ratio, cfg, edge_dist, rng));

    if (cfg.strong) {
        PerturbConfig strong_cfg = cfg;
        strong_cfg.whole_graph = true;
        strong_cfg.node_mask_ratio = cfg.strong_mask_ratio;
        PerturbationRecord rec = perturb(g, cfg.strong_edge_ratio, strong_cfg, edge_dist, rng);
        rec.is_strong = true;
        out.perturbed.push_back(std::move(rec));
    }
    return out;
}

/// Exact edge-operations-only graph edit distance: minimum edge symmetric
/// difference over all node bijections (attributes ignored). Test oracle;
/// factorial search, so n is capped at 8.
inline int exact_ged(const Graph& g1, const Graph& g2) {
    const int n = g1.num_nodes();
    if (n != g2.num_nodes()) throw ConfigError("exact_ged: node counts differ");
    if (n > 8) throw ConfigError("exact_ged: refusing factorial search beyond 8 nodes");
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    int best = g1.num_edges() + g2.num_edges();
    do {
        int diff = 0;
        for (int u = 0; u < n && diff < best; ++u)
            for (int v = u + 1; v < n; ++v)
                if (g1.has_edge(u, v) != g2.has_edge(perm[u], perm[v])) ++diff;
        best = std::min(best, diff);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

}  // namespace dsla
