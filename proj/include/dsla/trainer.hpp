// Training harnesses: Adam, the D-SLA pretraining loop (plus baseline
// objectives), graph-classification and link-prediction fine-tuning, the
// ablation driver, and the binary checkpoint format.
#pragma once

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dsla/dataset.hpp"
#include "dsla/encoder.hpp"
#include "dsla/logging.hpp"
#include "dsla/metrics.hpp"
#include "dsla/objectives.hpp"
#include "dsla/perturb.hpp"

namespace dsla {

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
    std::map<std::string, Tensor> m, v;
    long step = 0;
};

/// One Adam update with bias correction: θ ← θ − lr·m̂/(√v̂ + ε).
/// Only parameters present in `grads` are touched.
inline void adam_step(std::map<std::string, Tensor>& params, const GradMap& grads, AdamState& st,
                      double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
    ++st.step;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(st.step));
    for (const auto& [id, g] : grads) {
        auto pit = params.find(id);
        if (pit == params.end()) throw ContractError("adam_step: gradient for unknown parameter " + id);
        for (double gv : *g.data)
            if (!std::isfinite(gv)) throw NumericError("adam_step: non-finite gradient for " + id);
        Tensor& theta = pit->second;
        Tensor& m = st.m.try_emplace(id, Tensor(theta.rows, theta.cols)).first->second;
        Tensor& v = st.v.try_emplace(id, Tensor(theta.rows, theta.cols)).first->second;
        Tensor updated(theta.rows, theta.cols);
        for (std::size_t i = 0; i < theta.size(); ++i) {
            const double gv = (*g.data)[i];
            (*m.data)[i] = beta1 * (*m.data)[i] + (1.0 - beta1) * gv;
            (*v.data)[i] = beta2 * (*v.data)[i] + (1.0 - beta2) * gv * gv;
            const double mhat = (*m.data)[i] / bc1;
            const double vhat = (*v.data)[i] / bc2;
            (*updated.data)[i] = (*theta.data)[i] - lr * mhat / (std::sqrt(vhat) + eps);
        }
        theta = updated;
    }
}

// ---------------------------------------------------------------------------
// Configuration

enum class Objective { DSLA, Contrastive, AttrMask, EdgePred };

inline Objective objective_from_name(const std::string& s) {
    if (s == "dsla") return Objective::DSLA;
    if (s == "contrastive") return Objective::Contrastive;
    if (s == "attrmask") return Objective::AttrMask;
    if (s == "edgepred") return Objective::EdgePred;
    throw ConfigError("unknown objective '" + s + "'");
}

inline const char* objective_name(Objective o) {
    switch (o) {
        case Objective::DSLA: return "dsla";
        case Objective::Contrastive: return "contrastive";
        case Objective::AttrMask: return "attrmask";
        case Objective::EdgePred: return "edgepred";
    }
    return "dsla";
}

struct TrainConfig {
    int epochs = 100;
    int batch_size = 256;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    LossWeights loss;
    PerturbConfig perturb;
    EncoderConfig encoder;
    Objective objective = Objective::DSLA;
    std::uint64_t seed = 0;
    int workers = 1;
    bool freeze_encoder = false;
    int finetune_epochs = 100;
    int link_holdout = 10;
    int checkpoint_every = 0;  // epochs; 0 = final only
    std::string out_dir;       // empty: keep everything in memory

    void validate() const {
        if (epochs < 1 || finetune_epochs < 1) throw ConfigError("epochs must be positive");
        if (batch_size < 1) throw ConfigError("batch size must be positive");
        if (lr <= 0.0) throw ConfigError("learning rate must be positive");
        if (workers < 1) throw ConfigError("workers must be >= 1");
        loss.validate();
        perturb.validate();
        encoder.validate();
    }
};

// ---------------------------------------------------------------------------
// Checkpoints

struct Checkpoint {
    std::uint32_t version = 1;
    EncoderConfig cfg;
    std::map<std::string, Tensor> params;
    AdamState opt;
    std::uint64_t step = 0;
    std::string rng_state;

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);
};

namespace detail {

inline void write_raw(std::ofstream& out, const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void read_raw(std::ifstream& in, void* p, std::size_t n) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in) throw LoadError("checkpoint: truncated file");
}

}  // namespace detail

inline void Checkpoint::save(const std::string& path) const {
    nlohmann::json header;
    header["arch"] = arch_name(cfg.arch);
    header["num_layers"] = cfg.num_layers;
    header["dim"] = cfg.dim;
    header["node_vocab"] = cfg.node_vocab;
    header["edge_vocab"] = cfg.edge_vocab;
    header["step"] = step;
    header["rng"] = rng_state;
    auto manifest = nlohmann::json::array();
    for (const auto& [id, t] : params)
        manifest.push_back({{"id", id}, {"rows", t.rows}, {"cols", t.cols}});
    header["manifest"] = std::move(manifest);
    header["has_opt"] = !opt.m.empty() || !opt.v.empty();
    header["opt_step"] = opt.step;
    const std::string header_text = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot write checkpoint " + path);
    detail::write_raw(out, "DSLA", 4);
    const std::uint32_t ver = version;
    detail::write_raw(out, &ver, sizeof(ver));
    const std::uint64_t hlen = header_text.size();
    detail::write_raw(out, &hlen, sizeof(hlen));
    detail::write_raw(out, header_text.data(), header_text.size());
    for (const auto& [id, t] : params) detail::write_raw(out, t.data->data(), t.size() * 8);
    if (header["has_opt"].get<bool>()) {
        for (const auto& [id, t] : params) {
            auto it = opt.m.find(id);
            Tensor zero(t.rows, t.cols);
            const Tensor& m = it == opt.m.end() ? zero : it->second;
            detail::write_raw(out, m.data->data(), m.size() * 8);
        }
        for (const auto& [id, t] : params) {
            auto it = opt.v.find(id);
            Tensor zero(t.rows, t.cols);
            const Tensor& v = it == opt.v.end() ? zero : it->second;
            detail::write_raw(out, v.data->data(), v.size() * 8);
        }
    }
}

inline Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open checkpoint " + path);
    char magic[4];
    detail::read_raw(in, magic, 4);
    if (std::memcmp(magic, "DSLA", 4) != 0) throw LoadError("checkpoint: bad magic");
    Checkpoint ck;
    detail::read_raw(in, &ck.version, sizeof(ck.version));
    if (ck.version != 1) throw LoadError("checkpoint: unsupported version");
    std::uint64_t hlen = 0;
    detail::read_raw(in, &hlen, sizeof(hlen));
    std::string header_text(hlen, '\0');
    detail::read_raw(in, header_text.data(), hlen);
    nlohmann::json header = nlohmann::json::parse(header_text);
    ck.cfg.arch = arch_from_name(header.at("arch").get<std::string>());
    ck.cfg.num_layers = header.at("num_layers").get<int>();
    ck.cfg.dim = header.at("dim").get<int>();
    ck.cfg.node_vocab = header.at("node_vocab").get<int>();
    ck.cfg.edge_vocab = header.at("edge_vocab").get<int>();
    ck.step = header.at("step").get<std::uint64_t>();
    ck.rng_state = header.at("rng").get<std::string>();
    ck.opt.step = header.value("opt_step", 0L);
    for (const auto& entry : header.at("manifest")) {
        const std::string id = entry.at("id").get<std::string>();
        const int rows = entry.at("rows").get<int>();
        const int cols = entry.at("cols").get<int>();
        Tensor t(rows, cols);
        detail::read_raw(in, t.data->data(), t.size() * 8);
        ck.params.emplace(id, std::move(t));
    }
    if (header.at("has_opt").get<bool>()) {
        for (const auto& entry : header.at("manifest")) {
            const std::string id = entry.at("id").get<std::string>();
            Tensor t(entry.at("rows").get<int>(), entry.at("cols").get<int>());
            detail::read_raw(in, t.data->data(), t.size() * 8);
            ck.opt.m.emplace(id, std::move(t));
        }
        for (const auto& entry : header.at("manifest")) {
            const std::string id = entry.at("id").get<std::string>();
            Tensor t(entry.at("rows").get<int>(), entry.at("cols").get<int>());
            detail::read_raw(in, t.data->data(), t.size() * 8);
            ck.opt.v.emplace(id, std::move(t));
        }
    }
    return ck;
}

/// Human-readable manifest diff; empty string when compatible.
inline std::string checkpoint_mismatch(const EncoderConfig& ckpt, const EncoderConfig& want) {
    std::string diff;
    auto field = [&](const char* name, auto a, auto b) {
        if (a != b)
            diff += std::string(name) + ": checkpoint=" + std::to_string(a) +
                    " requested=" + std::to_string(b) + "\n";
    };
    if (ckpt.arch != want.arch)
        diff += std::string("arch: checkpoint=") + arch_name(ckpt.arch) +
                " requested=" + arch_name(want.arch) + "\n";
    field("num_layers", ckpt.num_layers, want.num_layers);
    field("dim", ckpt.dim, want.dim);
    field("node_vocab", ckpt.node_vocab, want.node_vocab);
    field("edge_vocab", ckpt.edge_vocab, want.edge_vocab);
    return diff;
}

// ---------------------------------------------------------------------------
// Loss history

struct LossRow {
    long step;
    int epoch;
    double total, gd, edit, margin;
};

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void write_loss_csv(const std::vector<LossRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw LoadError("cannot write " + path);
    out << "step,epoch,loss_total,loss_gd,loss_edit,loss_margin\n";
    for (const LossRow& r : rows)
        out << r.step << "," << r.epoch << "," << format_double(r.total) << ","
            << format_double(r.gd) << "," << format_double(r.edit) << ","
            << format_double(r.margin) << "\n";
}

// ---------------------------------------------------------------------------
// Pretraining

struct PretrainResult {
    Checkpoint checkpoint;
    std::vector<LossRow> history;
    long skipped_graphs = 0;    // summed over epochs
    long processed_graphs = 0;
};

namespace detail {

// Deterministic regardless of worker count: every item draws from its own
// stream keyed by (seed, epoch, dataset index).
inline std::vector<std::optional<PerturbationSet>> prepare_batch(
    const Dataset& ds, const std::vector<std::size_t>& items, int epoch, const TrainConfig& cfg,
    const std::vector<double>& edge_dist) {
    std::vector<std::optional<PerturbationSet>> out(items.size());
    auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t k = begin; k < end; ++k) {
            Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch) + 1,
                                static_cast<std::uint64_t>(items[k])));
            try {
                out[k] = make_perturbation_set(ds.graphs[items[k]], cfg.perturb, edge_dist, rng);
            } catch (const PerturbInfeasible&) {
                out[k] = std::nullopt;
            }
        }
    };
    if (cfg.workers <= 1 || items.size() < 2) {
        work(0, items.size());
    } else {
        const std::size_t nw = std::min<std::size_t>(cfg.workers, items.size());
        std::vector<std::thread> threads;
        const std::size_t chunk = (items.size() + nw - 1) / nw;
        for (std::size_t w = 0; w < nw; ++w) {
            const std::size_t b = w * chunk, e = std::min(items.size(), b + chunk);
            if (b < e) threads.emplace_back(work, b, e);
        }
        for (auto& t : threads) t.join();
    }
    return out;
}

inline Tensor pretrain_batch_loss_dsla(const std::vector<PerturbationSet>& sets,
                                       const ParamMap& leaves, const TrainConfig& cfg,
                                       LossBreakdown* bd) {
    std::vector<DiscrepancyItem> batch;
    for (const PerturbationSet& set : sets) {
        DiscrepancyItem item;
        item.anchor_emb = embed_graph(set.anchor, leaves, cfg.encoder);
        item.anchor_score = score(item.anchor_emb, leaves);
        for (const PerturbationRecord& rec : set.perturbed) {
            Tensor emb = embed_graph(rec.graph, leaves, cfg.encoder);
            item.perturbed_scores.push_back(score(emb, leaves));
            item.perturbed_embs.push_back(std::move(emb));
            item.edit_distances.push_back(rec.edit_distance);
            item.in_edit.push_back(!rec.is_strong || cfg.perturb.strong_in_edit);
        }
        batch.push_back(std::move(item));
    }
    return loss_total(batch, cfg.loss, bd);
}

inline Tensor pretrain_batch_loss_contrastive(const Dataset& ds,
                                              const std::vector<std::size_t>& items, int epoch,
                                              const std::vector<double>& edge_dist,
                                              const ParamMap& leaves, const TrainConfig& cfg,
                                              std::vector<std::size_t>* usable) {
    // two perturbed views per graph; negatives are the other graphs' second views
    std::vector<Tensor> view_a, view_b;
    for (std::size_t idx : items) {
        Rng rng(derive_seed(cfg.seed ^ 0x9e37ULL, static_cast<std::uint64_t>(epoch) + 1,
                            static_cast<std::uint64_t>(idx)));
        try {
            const double ratio = cfg.perturb.ratios[0];
            PerturbationRecord ra = perturb(ds.graphs[idx], ratio, cfg.perturb, edge_dist, rng);
            PerturbationRecord rb = perturb(ds.graphs[idx], ratio, cfg.perturb, edge_dist, rng);
            view_a.push_back(embed_graph(ra.graph, leaves, cfg.encoder));
            view_b.push_back(embed_graph(rb.graph, leaves, cfg.encoder));
            usable->push_back(idx);
        } catch (const PerturbInfeasible&) {
        }
    }
    if (view_a.empty()) throw ConfigError("pretrain: every graph in a batch was skipped");
    if (view_a.size() < 2) return Tensor();  // caller skips the batch
    Tensor acc = Tensor::scalar(0.0);
    for (std::size_t i = 0; i < view_a.size(); ++i) {
        std::vector<Tensor> negatives;
        for (std::size_t j = 0; j < view_b.size(); ++j)
            if (j != i) negatives.push_back(view_b[j]);
        acc = add(acc, loss_contrastive(view_a[i], view_b[i], negatives, cfg.loss.temperature));
    }
    return scale(acc, 1.0 / static_cast<double>(view_a.size()));
}

inline Tensor pretrain_batch_loss_attrmask(const Dataset& ds,
                                           const std::vector<std::size_t>& items, int epoch,
                                           const ParamMap& leaves, const TrainConfig& cfg,
                                           std::vector<std::size_t>* usable) {
    Tensor acc = Tensor::scalar(0.0);
    int used = 0;
    for (std::size_t idx : items) {
        const Graph& g = ds.graphs[idx];
        Rng rng(derive_seed(cfg.seed ^ 0xa77aULL, static_cast<std::uint64_t>(epoch) + 1,
                            static_cast<std::uint64_t>(idx)));
        std::vector<int> all(g.num_nodes());
        std::iota(all.begin(), all.end(), 0);
        std::vector<int> masked;
        Graph masked_graph = mask_nodes(g, cfg.perturb.node_mask_ratio, NodeSubset(all), rng, &masked);
        if (masked.empty()) continue;
        std::vector<int> truth;
        for (int v : masked) truth.push_back(g.node_attrs()[v]);
        Tensor embs = encode_nodes(masked_graph, leaves, cfg.encoder);
        acc = add(acc, loss_attr_mask(embs, masked, truth, detail::param(leaves, "attrmask.w"),
                                      detail::param(leaves, "attrmask.b")));
        usable->push_back(idx);
        ++used;
    }
    if (used == 0) throw ConfigError("attrmask objective: no usable graphs in batch");
    return scale(acc, 1.0 / used);
}

inline Tensor pretrain_batch_loss_edgepred(const Dataset& ds,
                                           const std::vector<std::size_t>& items, int epoch,
                                           const ParamMap& leaves, const TrainConfig& cfg,
                                           std::vector<std::size_t>* usable) {
    Tensor acc = Tensor::scalar(0.0);
    int used = 0;
    for (std::size_t idx : items) {
        const Graph& g = ds.graphs[idx];
        if (g.num_edges() == 0) continue;
        Rng rng(derive_seed(cfg.seed ^ 0xed9eULL, static_cast<std::uint64_t>(epoch) + 1,
                            static_cast<std::uint64_t>(idx)));
        std::vector<std::pair<int, int>> non_edges;
        for (int u = 0; u < g.num_nodes(); ++u)
            for (int v = u + 1; v < g.num_nodes(); ++v)
                if (!g.has_edge(u, v)) non_edges.emplace_back(u, v);
        if (non_edges.empty()) continue;
        std::vector<std::pair<int, int>> pos, neg;
        for (const Edge& e : g.edges()) pos.emplace_back(e.u, e.v);
        for (std::size_t k = 0; k < pos.size(); ++k) {
            const auto& p = non_edges[rng.index(non_edges.size())];
            neg.push_back(p);
        }
        Tensor embs = encode_nodes(g, leaves, cfg.encoder);
        acc = add(acc, loss_edge_pred(embs, pos, neg));
        usable->push_back(idx);
        ++used;
    }
    if (used == 0) throw ConfigError("edgepred objective: no usable graphs in batch");
    return scale(acc, 1.0 / used);
}

}  // namespace detail

/// Extra head parameters for baseline objectives.
inline void add_objective_heads(ModelParams& params, Objective obj, const EncoderConfig& cfg,
                                Rng& rng) {
    if (obj == Objective::AttrMask) {
        params.tensors["attrmask.w"] = detail::glorot(cfg.dim, cfg.node_vocab, rng);
        params.tensors["attrmask.b"] = Tensor(1, cfg.node_vocab);
    }
}

/// Eq.-8 pretraining (or a baseline objective). Deterministic for a fixed
/// seed at any worker count; infeasible graphs are skipped and counted.
inline PretrainResult pretrain(const Dataset& ds, const TrainConfig& cfg_in) {
    TrainConfig cfg = cfg_in;
    cfg.validate();
    if (ds.size() == 0) throw ConfigError("pretrain: empty dataset");
    if (cfg.encoder.node_vocab != ds.node_vocab || cfg.encoder.edge_vocab != ds.edge_vocab)
        throw ConfigError("pretrain: encoder vocab does not match dataset vocab");

    std::vector<double> edge_dist;
    bool corpus_has_edges = false;
    for (const Graph& g : ds.graphs)
        if (g.num_edges() > 0) corpus_has_edges = true;
    if (corpus_has_edges) edge_dist = fit_edge_attr_distribution(ds);

    Rng master(derive_seed(cfg.seed, 0x1717ULL));
    ModelParams params = init_encoder_params(cfg.encoder, master);
    add_objective_heads(params, cfg.objective, cfg.encoder, master);
    AdamState opt;

    PretrainResult result;
    long step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<std::size_t> order(ds.size());
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng(derive_seed(cfg.seed, 0x5affULL, static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        long processed_this_epoch = 0, skipped_this_epoch = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            std::vector<std::size_t> items(order.begin() + start, order.begin() + stop);

            LossBreakdown bd;
            Tape tape;
            ParamMap leaves = leaf_params(tape, params);
            Tensor loss;
            std::vector<std::size_t> usable;
            try {
                if (cfg.objective == Objective::DSLA) {
                    auto sets = detail::prepare_batch(ds, items, epoch, cfg, edge_dist);
                    std::vector<PerturbationSet> good;
                    for (std::size_t k = 0; k < sets.size(); ++k) {
                        if (sets[k]) {
                            good.push_back(std::move(*sets[k]));
                            usable.push_back(items[k]);
                        }
                    }
                    if (good.empty()) throw ConfigError("pretrain: every graph in a batch was skipped");
                    if (cfg.loss.use_margin && good.size() < 2) {
                        log_warn("batch of one usable graph with margin enabled; skipping batch");
                        skipped_this_epoch += static_cast<long>(items.size());
                        continue;
                    }
                    loss = detail::pretrain_batch_loss_dsla(good, leaves, cfg, &bd);
                } else if (cfg.objective == Objective::Contrastive) {
                    loss = detail::pretrain_batch_loss_contrastive(ds, items, epoch, edge_dist,
                                                                   leaves, cfg, &usable);
                    if (!loss.data) {
                        log_warn("batch with a single usable graph under the contrastive objective; skipping batch");
                        skipped_this_epoch += static_cast<long>(items.size());
                        continue;
                    }
                    bd.total = loss.item();
                } else if (cfg.objective == Objective::AttrMask) {
                    loss = detail::pretrain_batch_loss_attrmask(ds, items, epoch, leaves, cfg, &usable);
                    bd.total = loss.item();
                } else {
                    loss = detail::pretrain_batch_loss_edgepred(ds, items, epoch, leaves, cfg, &usable);
                    bd.total = loss.item();
                }
            } catch (const ConfigError&) {
                throw;
            }
            if (cfg.objective == Objective::DSLA) bd.total = loss.item();

            GradMap grads = tape.backward(loss);
            adam_step(params.tensors, grads, opt, cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
            ++step;
            result.history.push_back({step, epoch, bd.total, bd.gd, bd.edit, bd.margin});
            processed_this_epoch += static_cast<long>(usable.size());
            skipped_this_epoch += static_cast<long>(items.size() - usable.size());
        }
        if (processed_this_epoch + skipped_this_epoch != static_cast<long>(ds.size()))
            throw ContractError("pretrain: processed + skipped != dataset size");
        result.processed_graphs += processed_this_epoch;
        result.skipped_graphs += skipped_this_epoch;
        if (skipped_this_epoch > 0)
            log_info("epoch " + std::to_string(epoch) + ": skipped " +
                     std::to_string(skipped_this_epoch) + " infeasible graphs");

        if (!cfg.out_dir.empty() && cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0) {
            Checkpoint ck{1, cfg.encoder, params.tensors, opt, static_cast<std::uint64_t>(step),
                          master.serialize()};
            ck.save((std::filesystem::path(cfg.out_dir) /
                     ("checkpoint_epoch" + std::to_string(epoch + 1) + ".dsla")).string());
        }
    }

    result.checkpoint =
        Checkpoint{1, cfg.encoder, params.tensors, opt, static_cast<std::uint64_t>(step),
                   master.serialize()};
    if (!cfg.out_dir.empty()) {
        std::filesystem::create_directories(cfg.out_dir);
        result.checkpoint.save((std::filesystem::path(cfg.out_dir) / "checkpoint.dsla").string());
        write_loss_csv(result.history,
                       (std::filesystem::path(cfg.out_dir) / "loss_history.csv").string());
    }
    return result;
}

// ---------------------------------------------------------------------------
// Graph classification fine-tuning

struct MetricsReport {
    std::string metric;
    std::vector<double> per_seed;
    double mean = 0.0;
    double stddev = 0.0;
    nlohmann::json extra;

    static MetricsReport from_values(std::string metric, std::vector<double> values) {
        MetricsReport r;
        r.metric = std::move(metric);
        r.per_seed = std::move(values);
        double sum = 0.0;
        for (double v : r.per_seed) sum += v;
        r.mean = r.per_seed.empty() ? 0.0 : sum / static_cast<double>(r.per_seed.size());
        double var = 0.0;
        for (double v : r.per_seed) var += (v - r.mean) * (v - r.mean);
        r.stddev = r.per_seed.size() > 1
                       ? std::sqrt(var / static_cast<double>(r.per_seed.size() - 1))
                       : 0.0;
        return r;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["metric"] = metric;
        j["per_seed"] = per_seed;
        j["mean"] = mean;
        j["std"] = stddev;
        if (!extra.is_null()) j["extra"] = extra;
        return j;
    }
};

namespace detail {

struct EvalResult {
    double macro = std::numeric_limits<double>::quiet_NaN();
    int tasks_used = 0;
    int tasks_excluded = 0;
};

// Macro ROC-AUC over tasks that have both classes; single-class tasks are
// excluded with a warning.
inline EvalResult eval_classifier(const std::map<std::string, Tensor>& params,
                                  const TrainConfig& cfg, const Dataset& part) {
    EvalResult res;
    if (part.size() == 0 || part.num_tasks == 0) return res;
    std::vector<std::vector<double>> logits(part.size());
    for (std::size_t i = 0; i < part.size(); ++i) {
        Tensor h = embed_graph(part.graphs[i], params, cfg.encoder);
        Tensor z = add(matmul(h, params.at("cls.w")), params.at("cls.b"));
        logits[i].assign(z.data->begin(), z.data->end());
    }
    double acc = 0.0;
    for (int t = 0; t < part.num_tasks; ++t) {
        std::vector<double> scores;
        std::vector<int> labels;
        for (std::size_t i = 0; i < part.size(); ++i) {
            if (part.labels[i][t] == kLabelMissing) continue;
            scores.push_back(logits[i][t]);
            labels.push_back(part.labels[i][t]);
        }
        try {
            acc += roc_auc(scores, labels);
            ++res.tasks_used;
        } catch (const MetricUndefined&) {
            ++res.tasks_excluded;
            log_warn("task " + std::to_string(t) + " excluded from macro ROC-AUC (single class)");
        }
    }
    if (res.tasks_used > 0) res.macro = acc / res.tasks_used;
    return res;
}

inline std::map<std::string, Tensor>::const_iterator require(const ParamMap& m, const char* id) {
    auto it = m.find(id);
    if (it == m.end()) throw ContractError(std::string("missing parameter ") + id);
    return it;
}

}  // namespace detail

struct ClassifyRunResult {
    double test_auc = std::numeric_limits<double>::quiet_NaN();
    double best_valid_auc = std::numeric_limits<double>::quiet_NaN();
    int best_epoch = -1;
    int excluded_test_tasks = 0;
};

/// One fine-tuning run: linear per-task head on h_G, BCE over non-missing
/// labels, full-model updates (or head-only with freeze_encoder), model
/// selection on validation macro ROC-AUC.
inline ClassifyRunResult finetune_classify_run(const std::map<std::string, Tensor>* pretrained,
                                               const std::map<std::string, Dataset>& splits,
                                               const TrainConfig& cfg_in, std::uint64_t seed) {
    TrainConfig cfg = cfg_in;
    cfg.validate();
    const Dataset& train = splits.at("train");
    const Dataset& valid = splits.at("valid");
    const Dataset& test = splits.at("test");
    if (!train.labeled()) throw ConfigError("finetune: train split has no labels");
    const int num_tasks = train.num_tasks;

    Rng rng(derive_seed(seed, 0xf17eULL));
    ModelParams params;
    if (pretrained) {
        params.tensors = *pretrained;
    } else {
        params = init_encoder_params(cfg.encoder, rng);
    }
    params.tensors["cls.w"] = detail::glorot(cfg.encoder.dim, num_tasks, rng);
    params.tensors["cls.b"] = Tensor(1, num_tasks);
    AdamState opt;

    std::map<std::string, Tensor> best_params = params.tensors;
    ClassifyRunResult result;

    for (int epoch = 0; epoch < cfg.finetune_epochs; ++epoch) {
        std::vector<std::size_t> order(train.size());
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng(derive_seed(seed, 0xc1a55ULL, static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            Tape tape;
            ParamMap leaves;
            if (cfg.freeze_encoder) {
                leaves = params.tensors;  // constants
                leaves["cls.w"] = tape.leaf(params.tensors.at("cls.w"), "cls.w");
                leaves["cls.b"] = tape.leaf(params.tensors.at("cls.b"), "cls.b");
            } else {
                ModelParams tmp;
                tmp.tensors = params.tensors;
                leaves = leaf_params(tape, tmp);
            }
            Tensor acc = Tensor::scalar(0.0);
            long entries = 0;
            for (std::size_t k = start; k < stop; ++k) {
                const std::size_t i = order[k];
                Tensor h = embed_graph(train.graphs[i], leaves, cfg.encoder);
                Tensor z = add(matmul(h, detail::require(leaves, "cls.w")->second),
                               detail::require(leaves, "cls.b")->second);
                std::vector<double> y(num_tasks, 0.0), present(num_tasks, 0.0);
                for (int t = 0; t < num_tasks; ++t) {
                    if (train.labels[i][t] == kLabelMissing) continue;
                    y[t] = train.labels[i][t];
                    present[t] = 1.0;
                    ++entries;
                }
                // BCE with logits: softplus(z) - y·z, masked to present labels
                Tensor bce = sub(softplus(z), mul_elem(z, Tensor::from(1, num_tasks, y)));
                acc = add(acc, sum_all(mul_elem(bce, Tensor::from(1, num_tasks, present))));
            }
            if (entries == 0) continue;
            Tensor loss = scale(acc, 1.0 / static_cast<double>(entries));
            GradMap grads = tape.backward(loss);
            adam_step(params.tensors, grads, opt, cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
        }

        detail::EvalResult ev = detail::eval_classifier(params.tensors, cfg, valid);
        if (ev.tasks_used > 0 &&
            (std::isnan(result.best_valid_auc) || ev.macro > result.best_valid_auc)) {
            result.best_valid_auc = ev.macro;
            result.best_epoch = epoch;
            best_params = params.tensors;
        }
    }

    detail::EvalResult test_ev = detail::eval_classifier(best_params, cfg, test);
    result.test_auc = test_ev.macro;
    result.excluded_test_tasks = test_ev.tasks_excluded;
    return result;
}

/// Mean ± std of test macro ROC-AUC over seeds.
inline MetricsReport finetune_classify(const Checkpoint* pretrained,
                                       const std::map<std::string, Dataset>& splits,
                                       const TrainConfig& cfg, const std::vector<std::uint64_t>& seeds) {
    std::vector<double> values;
    nlohmann::json runs = nlohmann::json::array();
    for (std::uint64_t s : seeds) {
        ClassifyRunResult r =
            finetune_classify_run(pretrained ? &pretrained->params : nullptr, splits, cfg, s);
        values.push_back(r.test_auc);
        runs.push_back({{"seed", s},
                        {"test_auc", r.test_auc},
                        {"best_epoch", r.best_epoch},
                        {"excluded_test_tasks", r.excluded_test_tasks}});
    }
    MetricsReport report = MetricsReport::from_values("roc_auc", std::move(values));
    report.extra = {{"runs", runs}, {"pretrained", pretrained != nullptr}};
    return report;
}

// ---------------------------------------------------------------------------
// Link prediction fine-tuning

namespace detail {

struct LinkInstance {
    Graph message_graph;                    // structure minus held-out edges
    std::vector<std::pair<int, int>> pos;   // held-out edges
    std::vector<std::pair<int, int>> neg;   // fixed negatives (evaluation)
    std::vector<std::pair<int, int>> non_edges;  // sampling pool for training
};

// Held-out positives: min(holdout, |E|/2); equally many fixed negatives.
// Returns nothing when the graph cannot support the protocol.
inline std::optional<LinkInstance> prepare_link_instance(const Graph& g, int holdout,
                                                         std::uint64_t seed) {
    const int k = std::min(holdout, g.num_edges() / 2);
    if (k < 1) {
        log_warn("link: graph with " + std::to_string(g.num_edges()) + " edges skipped");
        return std::nullopt;
    }
    LinkInstance inst;
    for (int u = 0; u < g.num_nodes(); ++u)
        for (int v = u + 1; v < g.num_nodes(); ++v)
            if (!g.has_edge(u, v)) inst.non_edges.emplace_back(u, v);
    if (static_cast<int>(inst.non_edges.size()) < k) {
        log_warn("link: graph too dense to sample non-edges; skipped");
        return std::nullopt;
    }
    Rng rng(derive_seed(seed, 0x11efULL));
    std::vector<std::size_t> picked = rng.sample_without_replacement(g.num_edges(), k);
    std::set<Edge> held;
    for (std::size_t e : picked) {
        const Edge& edge = g.edges()[e];
        inst.pos.emplace_back(edge.u, edge.v);
        held.insert(edge);
    }
    std::vector<Edge> kept_edges;
    std::vector<int> kept_attrs;
    for (int i = 0; i < g.num_edges(); ++i) {
        if (held.count(g.edges()[i])) continue;
        kept_edges.push_back(g.edges()[i]);
        kept_attrs.push_back(g.edge_attrs()[i]);
    }
    inst.message_graph = Graph(g.num_nodes(), std::move(kept_edges), g.node_attrs(),
                               std::move(kept_attrs), g.node_vocab(), g.edge_vocab());
    for (std::size_t e : rng.sample_without_replacement(inst.non_edges.size(), k))
        inst.neg.push_back(inst.non_edges[e]);
    return inst;
}

inline double sigmoid_scalar(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// Pooled AP over fixed pos/neg pairs of every instance.
inline double eval_link_ap(const std::map<std::string, Tensor>& params, const TrainConfig& cfg,
                           const std::vector<LinkInstance>& instances) {
    std::vector<double> scores;
    std::vector<int> labels;
    for (const LinkInstance& inst : instances) {
        Tensor embs = encode_nodes(inst.message_graph, params, cfg.encoder);
        auto dot = [&](const std::pair<int, int>& p) {
            double d = 0.0;
            for (int c = 0; c < embs.cols; ++c) d += embs.at(p.first, c) * embs.at(p.second, c);
            return d;
        };
        for (const auto& p : inst.pos) {
            scores.push_back(sigmoid_scalar(dot(p)));
            labels.push_back(1);
        }
        for (const auto& p : inst.neg) {
            scores.push_back(sigmoid_scalar(dot(p)));
            labels.push_back(0);
        }
    }
    return average_precision(scores, labels);
}

}  // namespace detail

struct LinkRunResult {
    double test_ap = std::numeric_limits<double>::quiet_NaN();
    double best_valid_ap = std::numeric_limits<double>::quiet_NaN();
    int best_epoch = -1;
    long skipped_graphs = 0;
};

/// One link-prediction fine-tuning run. Held-out edges never appear in the
/// message-passing structure; training negatives are resampled per epoch while
/// evaluation pairs stay fixed.
inline LinkRunResult finetune_link_run(const std::map<std::string, Tensor>* pretrained,
                                       const std::map<std::string, Dataset>& splits,
                                       const TrainConfig& cfg_in, std::uint64_t seed) {
    TrainConfig cfg = cfg_in;
    cfg.validate();
    LinkRunResult result;

    auto prepare_all = [&](const Dataset& part, std::uint64_t salt) {
        std::vector<detail::LinkInstance> out;
        for (std::size_t i = 0; i < part.size(); ++i) {
            auto inst = detail::prepare_link_instance(
                part.graphs[i], cfg.link_holdout, derive_seed(cfg.seed ^ salt, i));
            if (inst)
                out.push_back(std::move(*inst));
            else
                ++result.skipped_graphs;
        }
        return out;
    };
    // pair selection depends on the split seed, not the fine-tuning seed, so
    // test AP is comparable across runs
    std::vector<detail::LinkInstance> train_inst = prepare_all(splits.at("train"), 0x7a11ULL);
    std::vector<detail::LinkInstance> valid_inst = prepare_all(splits.at("valid"), 0x7a12ULL);
    std::vector<detail::LinkInstance> test_inst = prepare_all(splits.at("test"), 0x7a13ULL);
    if (train_inst.empty() || test_inst.empty())
        throw ConfigError("link: no usable graphs in train or test split");

    Rng rng(derive_seed(seed, 0x11abULL));
    ModelParams params;
    if (pretrained)
        params.tensors = *pretrained;
    else
        params = init_encoder_params(cfg.encoder, rng);
    AdamState opt;
    std::map<std::string, Tensor> best_params = params.tensors;

    for (int epoch = 0; epoch < cfg.finetune_epochs; ++epoch) {
        std::vector<std::size_t> order(train_inst.size());
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng(derive_seed(seed, 0x50f7ULL, static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            Tape tape;
            ModelParams tmp;
            tmp.tensors = params.tensors;
            ParamMap leaves = leaf_params(tape, tmp);
            Tensor acc = Tensor::scalar(0.0);
            int used = 0;
            for (std::size_t k = start; k < stop; ++k) {
                detail::LinkInstance& inst = train_inst[order[k]];
                Rng neg_rng(derive_seed(seed ^ 0x1e9ULL, static_cast<std::uint64_t>(epoch),
                                        static_cast<std::uint64_t>(order[k])));
                std::vector<std::pair<int, int>> neg;
                for (std::size_t t = 0; t < inst.pos.size(); ++t)
                    neg.push_back(inst.non_edges[neg_rng.index(inst.non_edges.size())]);
                Tensor embs = encode_nodes(inst.message_graph, leaves, cfg.encoder);
                acc = add(acc, loss_edge_pred(embs, inst.pos, neg));
                ++used;
            }
            if (used == 0) continue;
            Tensor loss = scale(acc, 1.0 / used);
            GradMap grads = tape.backward(loss);
            adam_step(params.tensors, grads, opt, cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
        }
        if (!valid_inst.empty()) {
            const double ap = detail::eval_link_ap(params.tensors, cfg, valid_inst);
            if (std::isnan(result.best_valid_ap) || ap > result.best_valid_ap) {
                result.best_valid_ap = ap;
                result.best_epoch = epoch;
                best_params = params.tensors;
            }
        } else {
            best_params = params.tensors;
        }
    }

    result.test_ap = detail::eval_link_ap(best_params, cfg, test_inst);
    return result;
}

/// Mean ± std of pooled test AP over seeds.
inline MetricsReport finetune_link(const Checkpoint* pretrained,
                                   const std::map<std::string, Dataset>& splits,
                                   const TrainConfig& cfg, const std::vector<std::uint64_t>& seeds) {
    std::vector<double> values;
    nlohmann::json runs = nlohmann::json::array();
    for (std::uint64_t s : seeds) {
        LinkRunResult r =
            finetune_link_run(pretrained ? &pretrained->params : nullptr, splits, cfg, s);
        values.push_back(r.test_ap);
        runs.push_back({{"seed", s},
                        {"test_ap", r.test_ap},
                        {"best_epoch", r.best_epoch},
                        {"skipped_graphs", r.skipped_graphs}});
    }
    MetricsReport report = MetricsReport::from_values("average_precision", std::move(values));
    report.extra = {{"runs", runs}, {"pretrained", pretrained != nullptr}};
    return report;
}

// ---------------------------------------------------------------------------
// Ablation driver

struct AblationCell {
    std::string name;
    bool use_gd = false, use_edit = false, use_margin = false;
};

inline std::vector<AblationCell> default_loss_grid() {
    return {{"none", false, false, false},
            {"gd", true, false, false},
            {"edit", false, true, false},
            {"gd+edit", true, true, false},
            {"gd+edit+margin", true, true, true}};
}

struct AblationRow {
    AblationCell cell;
    MetricsReport report;
    bool failed = false;
    std::string error;
};

/// One pretrain + fine-tune pipeline per grid cell and seed, with identical
/// seed lists across cells. Failed cells are reported, not fatal.
inline std::vector<AblationRow> ablate(const std::map<std::string, Dataset>& splits,
                                       const TrainConfig& cfg,
                                       const std::vector<AblationCell>& grid,
                                       const std::vector<std::uint64_t>& seeds) {
    std::vector<AblationRow> rows;
    for (const AblationCell& cell : grid) {
        AblationRow row;
        row.cell = cell;
        try {
            std::vector<double> values;
            nlohmann::json runs = nlohmann::json::array();
            for (std::uint64_t s : seeds) {
                std::optional<Checkpoint> ckpt;
                if (cell.use_gd || cell.use_edit || cell.use_margin) {
                    TrainConfig pre_cfg = cfg;
                    pre_cfg.seed = s;
                    pre_cfg.out_dir.clear();
                    pre_cfg.loss.use_gd = cell.use_gd;
                    pre_cfg.loss.use_edit = cell.use_edit;
                    pre_cfg.loss.use_margin = cell.use_margin;
                    PretrainResult pr = pretrain(splits.at("pretrain"), pre_cfg);
                    ckpt = std::move(pr.checkpoint);
                }
                ClassifyRunResult r = finetune_classify_run(
                    ckpt ? &ckpt->params : nullptr, splits, cfg, s);
                values.push_back(r.test_auc);
                runs.push_back({{"seed", s}, {"test_auc", r.test_auc}});
            }
            row.report = MetricsReport::from_values("roc_auc", std::move(values));
            row.report.extra = {{"runs", runs}};
        } catch (const std::exception& e) {
            row.failed = true;
            row.error = e.what();
            log_error("ablation cell '" + cell.name + "' failed: " + row.error);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

inline void write_ablation_csv(const std::vector<AblationRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw LoadError("cannot write " + path);
    out << "name,gd,edit,margin,mean,std,per_seed,error\n";
    for (const AblationRow& r : rows) {
        out << r.cell.name << "," << (r.cell.use_gd ? 1 : 0) << "," << (r.cell.use_edit ? 1 : 0)
            << "," << (r.cell.use_margin ? 1 : 0) << ",";
        if (r.failed) {
            out << ",,," << r.error << "\n";
        } else {
            out << format_double(r.report.mean) << "," << format_double(r.report.stddev) << ",";
            for (std::size_t i = 0; i < r.report.per_seed.size(); ++i) {
                if (i) out << ";";
                out << format_double(r.report.per_seed[i]);
            }
            out << ",\n";
        }
    }
}

}  // namespace dsla
