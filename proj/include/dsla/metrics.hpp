// Evaluation metrics (ROC-AUC, average precision, Spearman rank correlation),
// the perturbation-ladder rank-correlation analysis, and 2D embedding export
// via PCA.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "dsla/errors.hpp"
#include "dsla/graph.hpp"
#include "dsla/perturb.hpp"
#include "dsla/rng.hpp"
#include "dsla/tensor.hpp"

namespace dsla {

/// Average ranks (1-based) with standard tie handling.
inline std::vector<double> average_ranks(const std::vector<double>& values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

/// Probability that a random positive outscores a random negative; ties count
/// one half (Mann-Whitney formulation).
inline double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw ShapeError("roc_auc: length mismatch");
    std::size_t pos = 0, neg = 0;
    for (int l : labels) (l != 0 ? pos : neg)++;
    if (pos == 0 || neg == 0) throw MetricUndefined("roc_auc: needs both classes");
    const std::vector<double> ranks = average_ranks(scores);
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] != 0) rank_sum += ranks[i];
    const double u = rank_sum - static_cast<double>(pos) * (static_cast<double>(pos) + 1.0) / 2.0;
    return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

/// Area under the precision-recall curve via running precision at each
/// positive, in descending-score order. Ties break by original index.
inline double average_precision(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw ShapeError("average_precision: length mismatch");
    std::size_t total_pos = 0;
    for (int l : labels)
        if (l != 0) ++total_pos;
    if (total_pos == 0) throw MetricUndefined("average_precision: no positives");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    double ap = 0.0;
    std::size_t seen_pos = 0;
    for (std::size_t k = 0; k < order.size(); ++k) {
        if (labels[order[k]] != 0) {
            ++seen_pos;
            ap += static_cast<double>(seen_pos) / static_cast<double>(k + 1);
        }
    }
    return ap / static_cast<double>(total_pos);
}

/// Pearson correlation of average ranks.
inline double spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size()) throw ShapeError("spearman: length mismatch");
    if (xs.size() < 2) throw MetricUndefined("spearman: needs at least two points");
    const std::vector<double> rx = average_ranks(xs);
    const std::vector<double> ry = average_ranks(ys);
    const double n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) throw MetricUndefined("spearman: zero rank variance");
    return sxy / std::sqrt(sxx * syy);
}

// ---------------------------------------------------------------------------
// PCA

struct PcaResult {
    std::vector<std::vector<double>> coords;   // n x dims
    std::vector<double> explained_ratio;       // per component
};

/// Mean-centered projection onto the top principal axes, via power iteration
/// with deflation on the covariance matrix. Sign convention: the component
/// with the largest magnitude in each axis is positive. Zero-variance axes
/// yield zero coordinates.
inline PcaResult pca_project(const std::vector<std::vector<double>>& rows, int dims = 2) {
    const int n = static_cast<int>(rows.size());
    if (n < dims) throw ShapeError("pca_project: need at least `dims` rows");
    const int d = n > 0 ? static_cast<int>(rows[0].size()) : 0;
    for (const auto& r : rows)
        if (static_cast<int>(r.size()) != d) throw ShapeError("pca_project: ragged input");

    std::vector<double> mean(d, 0.0);
    for (const auto& r : rows)
        for (int c = 0; c < d; ++c) mean[c] += r[c];
    for (double& m : mean) m /= n;

    std::vector<std::vector<double>> centered(n, std::vector<double>(d));
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < d; ++c) centered[i][c] = rows[i][c] - mean[c];

    // covariance (d x d), divisor n
    std::vector<std::vector<double>> cov(d, std::vector<double>(d, 0.0));
    for (int i = 0; i < n; ++i)
        for (int a = 0; a < d; ++a) {
            const double va = centered[i][a];
            if (va == 0.0) continue;
            for (int b = 0; b < d; ++b) cov[a][b] += va * centered[i][b];
        }
    for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) cov[a][b] /= n;
    double total_var = 0.0;
    for (int a = 0; a < d; ++a) total_var += cov[a][a];

    PcaResult result;
    result.coords.assign(n, std::vector<double>(dims, 0.0));
    const double tiny = 1e-14 * std::max(total_var, 1.0);

    for (int comp = 0; comp < dims; ++comp) {
        // deterministic start: basis vector of the largest remaining diagonal
        int start = 0;
        for (int a = 1; a < d; ++a)
            if (cov[a][a] > cov[start][start]) start = a;
        std::vector<double> v(d, 0.0);
        if (cov[start][start] <= tiny) {
            result.explained_ratio.push_back(0.0);
            continue;  // no variance left; coordinates stay zero
        }
        v[start] = 1.0;
        double lambda = 0.0;
        for (int iter = 0; iter < 2000; ++iter) {
            std::vector<double> w(d, 0.0);
            for (int a = 0; a < d; ++a) {
                const double va = v[a];
                if (va == 0.0) continue;
                for (int b = 0; b < d; ++b) w[b] += cov[a][b] * va;
            }
            double norm = 0.0;
            for (double x : w) norm += x * x;
            norm = std::sqrt(norm);
            if (norm <= tiny) break;
            for (double& x : w) x /= norm;
            double delta = 0.0;
            for (int a = 0; a < d; ++a) delta = std::max(delta, std::abs(w[a] - v[a]));
            v = w;
            lambda = norm;
            if (delta < 1e-13 && iter > 2) break;
        }
        // sign convention
        int arg = 0;
        for (int a = 1; a < d; ++a)
            if (std::abs(v[a]) > std::abs(v[arg])) arg = a;
        if (v[arg] < 0.0)
            for (double& x : v) x = -x;

        for (int i = 0; i < n; ++i) {
            double proj = 0.0;
            for (int a = 0; a < d; ++a) proj += centered[i][a] * v[a];
            result.coords[i][comp] = proj;
        }
        result.explained_ratio.push_back(total_var > 0.0 ? lambda / total_var : 0.0);
        // deflate
        for (int a = 0; a < d; ++a)
            for (int b = 0; b < d; ++b) cov[a][b] -= lambda * v[a] * v[b];
    }
    return result;
}

// ---------------------------------------------------------------------------
// Rank-correlation ladder analysis

inline const std::vector<double>& ladder_magnitudes() {
    static const std::vector<double> mags{0.05, 0.10, 0.15, 0.25, 0.35, 0.45, 0.60, 0.75, 0.90};
    return mags;
}

struct RankLadder {
    Graph anchor;
    std::vector<PerturbationRecord> rungs;  // one per magnitude, ascending
};

/// Whole-graph edge perturbation at each magnitude (no node masking: the
/// analysis compares structural discrepancy only).
inline RankLadder build_rank_ladder(const Graph& g, const std::vector<double>& magnitudes,
                                    const std::vector<double>& edge_dist, Rng& rng) {
    RankLadder ladder;
    ladder.anchor = g;
    PerturbConfig cfg;
    cfg.whole_graph = true;
    cfg.node_mask_ratio = 0.0;
    cfg.ratios = {1.0};  // unused by direct perturb() calls
    double prev = 0.0;
    for (double m : magnitudes) {
        if (m <= prev) throw ConfigError("rank ladder: magnitudes must be strictly increasing");
        prev = m;
        ladder.rungs.push_back(perturb(g, m, cfg, edge_dist, rng));
    }
    return ladder;
}

struct RankCorrelationRow {
    std::size_t graph_id;
    double coefficient;
    int num_ladder_points;
};

struct RankCorrelationReport {
    double mean = 0.0;
    std::vector<RankCorrelationRow> rows;
    int skipped = 0;
};

/// For sampled corpus graphs: build the 9-magnitude ladder, embed anchor and
/// rungs with `embed` (graph -> 1 x dim row), and rank-correlate embedding
/// distances against ledger edit distances. Graphs whose ladder is infeasible
/// or degenerate are skipped and counted.
inline RankCorrelationReport rank_correlation_analysis(
    const std::function<std::vector<double>(const Graph&)>& embed,
    const std::vector<Graph>& corpus, std::size_t num_graphs, std::uint64_t seed,
    const std::vector<double>& edge_dist = {},
    const std::vector<double>& magnitudes = ladder_magnitudes()) {
    if (corpus.empty()) throw ConfigError("rank_correlation_analysis: empty corpus");
    Rng pick_rng(derive_seed(seed, 0xabcdULL));
    std::vector<std::size_t> chosen;
    if (corpus.size() <= num_graphs) {
        chosen.resize(corpus.size());
        std::iota(chosen.begin(), chosen.end(), 0);
    } else {
        chosen = pick_rng.sample_without_replacement(corpus.size(), num_graphs);
        std::sort(chosen.begin(), chosen.end());
    }

    RankCorrelationReport report;
    double sum = 0.0;
    for (std::size_t gi : chosen) {
        Rng rng(derive_seed(seed, 0x1adde3ULL, gi));
        try {
            RankLadder ladder = build_rank_ladder(corpus[gi], magnitudes, edge_dist, rng);
            const std::vector<double> h0 = embed(ladder.anchor);
            std::vector<double> edits, dists;
            for (const PerturbationRecord& rec : ladder.rungs) {
                const std::vector<double> hi = embed(rec.graph);
                double acc = kNormEps;
                for (std::size_t c = 0; c < h0.size(); ++c)
                    acc += (h0[c] - hi[c]) * (h0[c] - hi[c]);
                dists.push_back(std::sqrt(acc));
                edits.push_back(static_cast<double>(rec.edit_distance));
            }
            const double rho = spearman(edits, dists);
            report.rows.push_back({gi, rho, static_cast<int>(ladder.rungs.size())});
            sum += rho;
        } catch (const PerturbInfeasible&) {
            ++report.skipped;
        } catch (const MetricUndefined&) {
            ++report.skipped;
        }
    }
    if (report.rows.empty()) throw MetricUndefined("rank_correlation_analysis: every ladder was skipped");
    report.mean = sum / static_cast<double>(report.rows.size());
    return report;
}

}  // namespace dsla
