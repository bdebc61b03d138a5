// GIN and GCN message-passing encoders, mean readout, the scalar score head,
// and the embedding-distance function. Forward passes run on a caller-owned
// Tape; passing raw (un-leafed) parameters gives a constant, gradient-free
// forward.
#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "dsla/graph.hpp"
#include "dsla/rng.hpp"
#include "dsla/tensor.hpp"

namespace dsla {

enum class Arch { GIN, GCN };

inline const char* arch_name(Arch a) { return a == Arch::GIN ? "gin" : "gcn"; }

inline Arch arch_from_name(const std::string& s) {
    if (s == "gin" || s == "GIN") return Arch::GIN;
    if (s == "gcn" || s == "GCN") return Arch::GCN;
    throw ConfigError("unknown encoder arch '" + s + "'");
}

struct EncoderConfig {
    Arch arch = Arch::GIN;
    int num_layers = 5;   // GCN default is 3, set by the caller
    int dim = 300;
    int node_vocab = 1;
    int edge_vocab = 1;

    void validate() const {
        if (num_layers < 1) throw ConfigError("encoder: need at least one layer");
        if (dim < 1) throw ConfigError("encoder: dim must be positive");
        if (node_vocab < 1 || edge_vocab < 1) throw ConfigError("encoder: vocab must be >= 1");
    }
};

/// All trainable tensors, addressable by stable string IDs. Map order defines
/// the checkpoint manifest order.
struct ModelParams {
    std::map<std::string, Tensor> tensors;

    const Tensor& at(const std::string& id) const {
        auto it = tensors.find(id);
        if (it == tensors.end()) throw ContractError("missing parameter '" + id + "'");
        return it->second;
    }
};

using ParamMap = std::map<std::string, Tensor>;

namespace detail {

inline Tensor glorot(int rows, int cols, Rng& rng) {
    const double bound = std::sqrt(6.0 / (rows + cols));
    std::vector<double> vals(static_cast<std::size_t>(rows) * cols);
    for (double& v : vals) v = (2.0 * rng.uniform() - 1.0) * bound;
    return Tensor::from(rows, cols, std::move(vals));
}

}  // namespace detail

/// Weights uniform in ±sqrt(6/(fan_in+fan_out)), biases zero, GIN ε zero.
/// GIN layers use a dim -> 2*dim -> dim MLP; GCN layers a single dim x dim
/// linear map. Embedding tables have vocab+1 rows (last row = MASK).
inline ModelParams init_encoder_params(const EncoderConfig& cfg, Rng& rng) {
    cfg.validate();
    ModelParams p;
    p.tensors["embed.node"] = detail::glorot(cfg.node_vocab + 1, cfg.dim, rng);
    p.tensors["embed.edge"] = detail::glorot(cfg.edge_vocab + 1, cfg.dim, rng);
    for (int l = 0; l < cfg.num_layers; ++l) {
        const std::string base = std::string(arch_name(cfg.arch)) + ".l" + std::to_string(l);
        if (cfg.arch == Arch::GIN) {
            p.tensors[base + ".w1"] = detail::glorot(cfg.dim, 2 * cfg.dim, rng);
            p.tensors[base + ".b1"] = Tensor(1, 2 * cfg.dim);
            p.tensors[base + ".w2"] = detail::glorot(2 * cfg.dim, cfg.dim, rng);
            p.tensors[base + ".b2"] = Tensor(1, cfg.dim);
            p.tensors[base + ".eps"] = Tensor(1, 1);
        } else {
            p.tensors[base + ".w"] = detail::glorot(cfg.dim, cfg.dim, rng);
        }
    }
    p.tensors["score.w1"] = detail::glorot(cfg.dim, cfg.dim, rng);
    p.tensors["score.b1"] = Tensor(1, cfg.dim);
    p.tensors["score.w2"] = detail::glorot(cfg.dim, 1, rng);
    p.tensors["score.b2"] = Tensor(1, 1);
    return p;
}

/// Put every parameter on the tape; backward() will key gradients by id.
inline ParamMap leaf_params(Tape& tape, const ModelParams& params) {
    ParamMap out;
    for (const auto& [id, t] : params.tensors) out.emplace(id, tape.leaf(t, id));
    return out;
}

namespace detail {

struct MessageList {
    std::vector<int> src, dst, attr;  // one entry per directed message
};

inline MessageList directed_messages(const Graph& g) {
    MessageList m;
    m.src.reserve(2 * g.num_edges());
    for (int i = 0; i < g.num_edges(); ++i) {
        const Edge& e = g.edges()[i];
        const int a = g.edge_attrs()[i];
        m.src.push_back(e.u);
        m.dst.push_back(e.v);
        m.attr.push_back(a);
        m.src.push_back(e.v);
        m.dst.push_back(e.u);
        m.attr.push_back(a);
    }
    return m;
}

inline const Tensor& param(const ParamMap& p, const std::string& id) {
    auto it = p.find(id);
    if (it == p.end()) throw ContractError("missing parameter '" + id + "'");
    return it->second;
}

}  // namespace detail

/// Per-node embeddings (|V| x dim).
/// GIN layer:  h_v <- MLP((1+ε)·h_v + Σ_{u∈N(v)} (h_u + edge_emb(u,v)))
/// GCN layer:  h_v <- ReLU(W Σ_{u∈N(v)∪{v}} (h_u + edge_emb) / sqrt((deg u+1)(deg v+1)))
/// GCN self-loop messages reuse the reserved embedding-table row.
inline Tensor encode_nodes(const Graph& g, const ParamMap& params, const EncoderConfig& cfg) {
    cfg.validate();
    if (g.num_nodes() == 0) throw ShapeError("encode_nodes: empty graph");
    for (int a : g.node_attrs())
        if (a > cfg.node_vocab) throw std::out_of_range("node attribute exceeds vocab+MASK");
    for (int a : g.edge_attrs())
        if (a > cfg.edge_vocab) throw std::out_of_range("edge attribute exceeds vocab+MASK");

    const Tensor& node_table = detail::param(params, "embed.node");
    const Tensor& edge_table = detail::param(params, "embed.edge");
    Tensor h = gather_rows(node_table, g.node_attrs());
    const detail::MessageList msgs = detail::directed_messages(g);
    const int n = g.num_nodes();

    for (int l = 0; l < cfg.num_layers; ++l) {
        const std::string base = std::string(arch_name(cfg.arch)) + ".l" + std::to_string(l);
        if (cfg.arch == Arch::GIN) {
            Tensor agg;
            if (!msgs.src.empty()) {
                Tensor m = add(gather_rows(h, msgs.src), gather_rows(edge_table, msgs.attr));
                agg = scatter_add_rows(m, msgs.dst, n);
            } else {
                agg = Tensor(n, cfg.dim);  // empty neighborhood sums to zero
            }
            Tensor one_plus_eps = add(detail::param(params, base + ".eps"), Tensor::scalar(1.0));
            Tensor pre = add(mul_scalar(h, one_plus_eps), agg);
            Tensor hidden = relu(add_rowvec(matmul(pre, detail::param(params, base + ".w1")),
                                            detail::param(params, base + ".b1")));
            h = add_rowvec(matmul(hidden, detail::param(params, base + ".w2")),
                           detail::param(params, base + ".b2"));
        } else {
            std::vector<double> inv_deg(n);
            for (int v = 0; v < n; ++v) inv_deg[v] = 1.0 / (g.degree(v) + 1.0);
            Tensor agg;
            if (!msgs.src.empty()) {
                std::vector<double> coeff(msgs.src.size());
                for (std::size_t i = 0; i < msgs.src.size(); ++i)
                    coeff[i] = std::sqrt(inv_deg[msgs.src[i]] * inv_deg[msgs.dst[i]]);
                Tensor m = add(gather_rows(h, msgs.src), gather_rows(edge_table, msgs.attr));
                agg = scatter_add_rows(scale_rows(m, coeff), msgs.dst, n);
            } else {
                agg = Tensor(n, cfg.dim);
            }
            Tensor self_emb = gather_rows(edge_table, std::vector<int>(n, cfg.edge_vocab));
            Tensor self_part = scale_rows(add(h, self_emb), inv_deg);
            h = relu(matmul(add(agg, self_part), detail::param(params, base + ".w")));
        }
    }
    return h;
}

/// Mean over node embeddings -> 1 x dim graph embedding.
inline Tensor readout(const Tensor& node_embs) { return mean_rows(node_embs); }

/// Scalar graph score: w2ᵀ·ReLU(W1 h + b1) + b2.
inline Tensor score(const Tensor& h_graph, const ParamMap& params) {
    if (h_graph.rows != 1) throw ShapeError("score: expected a 1 x dim embedding");
    Tensor hidden = relu(add_rowvec(matmul(h_graph, detail::param(params, "score.w1")),
                                    detail::param(params, "score.b1")));
    return add(matmul(hidden, detail::param(params, "score.w2")),
               detail::param(params, "score.b2"));
}

/// ‖a − b‖₂ with the ε-guard of l2_norm_rows -> 1 x 1.
inline Tensor embedding_distance(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ShapeError("embedding_distance: shape mismatch");
    return l2_norm_rows(sub(a, b));
}

/// readout ∘ encode_nodes.
inline Tensor embed_graph(const Graph& g, const ParamMap& params, const EncoderConfig& cfg) {
    return readout(encode_nodes(g, params, cfg));
}

}  // namespace dsla
