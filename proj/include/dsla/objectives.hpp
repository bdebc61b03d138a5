// Training objectives: graph discrimination, edit-distance regularizer,
// margin triplet loss and their weighted combination, plus the predictive /
// contrastive baseline objectives used for ablations.
#pragma once

#include <string>
#include <vector>

#include "dsla/encoder.hpp"
#include "dsla/tensor.hpp"

namespace dsla {

struct LossWeights {
    double lambda1 = 0.7;       // edit-loss weight
    double lambda2 = 0.5;       // margin-loss weight
    double margin_alpha = 5.0;  // triplet margin
    bool use_gd = true;
    bool use_edit = true;
    bool use_margin = true;
    double temperature = 0.1;   // contrastive baseline f_sim temperature

    void validate() const {
        if (lambda1 < 0.0 || lambda2 < 0.0) throw ConfigError("loss weights must be nonnegative");
        if (use_margin && margin_alpha <= 0.0)
            throw ConfigError("margin alpha must be positive when the margin loss is enabled");
    }
};

/// Anchor-vs-perturbed discrimination: -log(e^{S0} / Σ_k e^{Sk}),
/// computed as logsumexp(S) - S0. scores[0] is the anchor.
inline Tensor loss_gd(const std::vector<Tensor>& scores) {
    if (scores.size() < 2) throw ContractError("loss_gd: need the anchor and at least one perturbed score");
    for (const Tensor& s : scores)
        if (s.rows != 1 || s.cols != 1) throw ShapeError("loss_gd: scores must be 1x1");
    Tensor row = stack_cols(scores);
    return sub(log_sum_exp_row(row), scores[0]);
}

/// Edit-distance regularizer: Σ_{i<j} (d_i/e_i - d_j/e_j)². Unordered pairs;
/// fewer than two items make the pair set empty.
inline Tensor loss_edit(const std::vector<Tensor>& distances, const std::vector<int>& edit_distances) {
    if (distances.size() != edit_distances.size())
        throw ContractError("loss_edit: distance/edit count mismatch");
    for (int e : edit_distances)
        if (e < 1) throw ContractError("loss_edit: edit distance must be >= 1 (anchor must not appear)");
    if (distances.size() < 2) return Tensor::scalar(0.0);
    std::vector<Tensor> ratios;
    ratios.reserve(distances.size());
    for (std::size_t i = 0; i < distances.size(); ++i)
        ratios.push_back(scale(distances[i], 1.0 / edit_distances[i]));
    Tensor acc = Tensor::scalar(0.0);
    for (std::size_t i = 0; i < ratios.size(); ++i)
        for (std::size_t j = i + 1; j < ratios.size(); ++j)
            acc = add(acc, square(sub(ratios[i], ratios[j])));
    return acc;
}

/// Triplet margin loss: Σ_{i,j} max(0, α + d_i - d'_j) over the full
/// cross-product of perturbed distances and negative distances.
inline Tensor loss_margin(const std::vector<Tensor>& d, const std::vector<Tensor>& d_neg,
                          double alpha) {
    if (alpha <= 0.0) throw ConfigError("loss_margin: alpha must be positive");
    if (d.empty() || d_neg.empty()) return Tensor::scalar(0.0);
    Tensor acc = Tensor::scalar(0.0);
    const Tensor alpha_t = Tensor::scalar(alpha);
    for (const Tensor& di : d)
        for (const Tensor& dj : d_neg) acc = add(acc, relu(add(sub(di, dj), alpha_t)));
    return acc;
}

/// One anchor's contribution to a batch loss.
struct DiscrepancyItem {
    Tensor anchor_emb;    // 1 x dim
    Tensor anchor_score;  // 1 x 1
    std::vector<Tensor> perturbed_embs;
    std::vector<Tensor> perturbed_scores;
    std::vector<int> edit_distances;
    std::vector<bool> in_edit;  // strong records may be excluded from the edit loss
};

struct LossBreakdown {
    double gd = 0.0;
    double edit = 0.0;
    double margin = 0.0;
    double total = 0.0;
};

/// Combined objective L = L_GD + λ1·L_edit + λ2·L_margin, each term averaged
/// over the anchors in the batch. Negatives for the margin term are the other
/// anchors in the batch.
inline Tensor loss_total(const std::vector<DiscrepancyItem>& batch, const LossWeights& w,
                         LossBreakdown* breakdown = nullptr) {
    w.validate();
    if (batch.empty()) throw ContractError("loss_total: empty batch");
    if (w.use_margin && batch.size() < 2)
        throw ConfigError("loss_total: margin loss needs at least two graphs in the batch");

    const double inv_n = 1.0 / static_cast<double>(batch.size());
    Tensor gd_acc = Tensor::scalar(0.0);
    Tensor edit_acc = Tensor::scalar(0.0);
    Tensor margin_acc = Tensor::scalar(0.0);

    // anchor-to-perturbed distances, shared by the edit and margin terms
    std::vector<std::vector<Tensor>> dists(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i)
        for (const Tensor& pe : batch[i].perturbed_embs)
            dists[i].push_back(embedding_distance(batch[i].anchor_emb, pe));

    for (std::size_t i = 0; i < batch.size(); ++i) {
        const DiscrepancyItem& item = batch[i];
        if (w.use_gd) {
            std::vector<Tensor> scores;
            scores.push_back(item.anchor_score);
            for (const Tensor& s : item.perturbed_scores) scores.push_back(s);
            gd_acc = add(gd_acc, loss_gd(scores));
        }
        if (w.use_edit) {
            std::vector<Tensor> d;
            std::vector<int> e;
            for (std::size_t k = 0; k < dists[i].size(); ++k) {
                if (k < item.in_edit.size() && !item.in_edit[k]) continue;
                d.push_back(dists[i][k]);
                e.push_back(item.edit_distances[k]);
            }
            edit_acc = add(edit_acc, loss_edit(d, e));
        }
        if (w.use_margin) {
            std::vector<Tensor> d_neg;
            for (std::size_t j = 0; j < batch.size(); ++j)
                if (j != i)
                    d_neg.push_back(embedding_distance(batch[i].anchor_emb, batch[j].anchor_emb));
            margin_acc = add(margin_acc, loss_margin(dists[i], d_neg, w.margin_alpha));
        }
    }

    Tensor gd_mean = scale(gd_acc, inv_n);
    Tensor edit_mean = scale(edit_acc, inv_n);
    Tensor margin_mean = scale(margin_acc, inv_n);
    Tensor total = add(add(gd_mean, scale(edit_mean, w.lambda1)), scale(margin_mean, w.lambda2));
    if (breakdown) {
        breakdown->gd = gd_mean.item();
        breakdown->edit = edit_mean.item();
        breakdown->margin = margin_mean.item();
        breakdown->total = total.item();
    }
    return total;
}

namespace detail {

inline Tensor cosine(const Tensor& a, const Tensor& b) {
    Tensor dot = sum_all(mul_elem(a, b));
    Tensor norms = mul_elem(l2_norm_rows(a), l2_norm_rows(b));
    return div_elem(dot, norms);
}

inline Tensor ones_col(int n) {
    return Tensor::from(n, 1, std::vector<double>(static_cast<std::size_t>(n), 1.0));
}

}  // namespace detail

/// Contrastive baseline on a positive pair (h_i, h_j) against negatives:
/// -log(f_sim(i,j) / (f_sim(i,j) + Σ_k f_sim(i,negᵏ))), f_sim = exp(cos/τ).
inline Tensor loss_contrastive(const Tensor& h_i, const Tensor& h_j,
                               const std::vector<Tensor>& negatives, double temperature) {
    if (negatives.empty()) throw ContractError("loss_contrastive: need at least one negative");
    if (temperature <= 0.0) throw ConfigError("loss_contrastive: temperature must be positive");
    std::vector<Tensor> sims;
    sims.push_back(scale(detail::cosine(h_i, h_j), 1.0 / temperature));
    for (const Tensor& neg : negatives)
        sims.push_back(scale(detail::cosine(h_i, neg), 1.0 / temperature));
    Tensor row = stack_cols(sims);
    return sub(log_sum_exp_row(row), sims[0]);
}

/// AttrMasking baseline: softmax cross-entropy over the node vocabulary from a
/// linear head on the masked nodes' embeddings.
inline Tensor loss_attr_mask(const Tensor& node_embs, const std::vector<int>& masked_ids,
                             const std::vector<int>& true_attrs, const Tensor& head_w,
                             const Tensor& head_b) {
    if (masked_ids.empty()) throw ContractError("loss_attr_mask: no masked nodes");
    if (masked_ids.size() != true_attrs.size())
        throw ContractError("loss_attr_mask: ids/attrs length mismatch");
    const int vocab = head_w.cols;
    Tensor logits = add_rowvec(matmul(gather_rows(node_embs, masked_ids), head_w), head_b);
    Tensor lse = log_sum_exp_row(logits);  // m x 1
    std::vector<double> onehot(static_cast<std::size_t>(masked_ids.size()) * vocab, 0.0);
    for (std::size_t i = 0; i < true_attrs.size(); ++i) {
        if (true_attrs[i] < 0 || true_attrs[i] >= vocab)
            throw std::out_of_range("loss_attr_mask: true attribute outside vocab");
        onehot[i * vocab + true_attrs[i]] = 1.0;
    }
    Tensor picked = matmul(mul_elem(logits, Tensor::from(static_cast<int>(masked_ids.size()), vocab,
                                                         std::move(onehot))),
                           detail::ones_col(vocab));  // m x 1
    return scale(sum_all(sub(lse, picked)), 1.0 / static_cast<double>(masked_ids.size()));
}

/// EdgePred baseline: binary cross-entropy on sigmoid(h_u·h_v) for positive
/// (existing) and negative (sampled non-edge) node pairs; mean over all pairs.
inline Tensor loss_edge_pred(const Tensor& node_embs,
                             const std::vector<std::pair<int, int>>& pos_pairs,
                             const std::vector<std::pair<int, int>>& neg_pairs) {
    if (pos_pairs.empty() || neg_pairs.empty())
        throw ContractError("loss_edge_pred: need at least one pair of each kind");
    auto dots = [&](const std::vector<std::pair<int, int>>& pairs) {
        std::vector<int> us, vs;
        for (auto [u, v] : pairs) {
            us.push_back(u);
            vs.push_back(v);
        }
        Tensor prod = mul_elem(gather_rows(node_embs, us), gather_rows(node_embs, vs));
        return matmul(prod, detail::ones_col(node_embs.cols));  // m x 1
    };
    // BCE with logits: positives contribute softplus(-z), negatives softplus(z)
    Tensor pos_term = sum_all(softplus(scale(dots(pos_pairs), -1.0)));
    Tensor neg_term = sum_all(softplus(dots(neg_pairs)));
    const double total = static_cast<double>(pos_pairs.size() + neg_pairs.size());
    return scale(add(pos_term, neg_term), 1.0 / total);
}

}  // namespace dsla
