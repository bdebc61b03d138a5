#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "dsla/dataset.hpp"
#include "dsla/metrics.hpp"
#include "test_util.hpp"

using dsla::Graph;
using dsla_test::random_er_graph;

namespace {

// slow pair-counting oracles
double auc_oracle(const std::vector<double>& s, const std::vector<int>& y) {
    double wins = 0.0;
    long pairs = 0;
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (y[i] == 0 || y[j] != 0) continue;
            ++pairs;
            if (s[i] > s[j]) wins += 1.0;
            if (s[i] == s[j]) wins += 0.5;
        }
    return wins / static_cast<double>(pairs);
}

double ap_oracle(const std::vector<double>& s, const std::vector<int>& y) {
    // descending score, stable by index
    std::vector<std::size_t> order(s.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
    double total_pos = 0.0;
    for (int l : y) total_pos += l != 0 ? 1.0 : 0.0;
    double seen = 0.0, ap = 0.0;
    for (std::size_t k = 0; k < order.size(); ++k)
        if (y[order[k]] != 0) {
            seen += 1.0;
            ap += seen / static_cast<double>(k + 1);
        }
    return ap / total_pos;
}

double spearman_oracle(const std::vector<double>& xs, const std::vector<double>& ys) {
    auto rx = dsla::average_ranks(xs);
    auto ry = dsla::average_ranks(ys);
    // plain Pearson on ranks, computed the textbook way
    const double n = static_cast<double>(xs.size());
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sx += rx[i];
        sy += ry[i];
        sxx += rx[i] * rx[i];
        syy += ry[i] * ry[i];
        sxy += rx[i] * ry[i];
    }
    const double cov = sxy - sx * sy / n;
    const double vx = sxx - sx * sx / n;
    const double vy = syy - sy * sy / n;
    return cov / std::sqrt(vx * vy);
}

}  // namespace

TEST_CASE("roc_auc examples") {
    CHECK(dsla::roc_auc({0.9, 0.1}, {1, 0}) == 1.0);
    CHECK(dsla::roc_auc({0.1, 0.9}, {1, 0}) == 0.0);
    CHECK(dsla::roc_auc({0.8, 0.4, 0.6, 0.2}, {1, 1, 0, 0}) == Catch::Approx(0.75).margin(1e-15));
    CHECK_THROWS_AS(dsla::roc_auc({0.5, 0.6}, {1, 1}), dsla::MetricUndefined);
}

TEST_CASE("average_precision examples") {
    CHECK(dsla::average_precision({0.9, 0.8, 0.1, 0.2}, {1, 1, 0, 0}) == 1.0);
    // single positive ranked last of four
    CHECK(dsla::average_precision({0.9, 0.8, 0.7, 0.1}, {0, 0, 0, 1}) ==
          Catch::Approx(0.25).margin(1e-15));
    // descending-order labels [1,0,1]
    CHECK(dsla::average_precision({0.9, 0.5, 0.1}, {1, 0, 1}) ==
          Catch::Approx((1.0 + 2.0 / 3.0) / 2.0).margin(1e-15));
    CHECK_THROWS_AS(dsla::average_precision({0.5}, {0}), dsla::MetricUndefined);
}

TEST_CASE("spearman examples") {
    CHECK(dsla::spearman({1, 2, 3, 4}, {1, 2, 3, 4}) == Catch::Approx(1.0));
    CHECK(dsla::spearman({1, 2, 3, 4}, {4, 3, 2, 1}) == Catch::Approx(-1.0));
    CHECK(dsla::spearman({1, 2, 3, 4}, {1, 3, 2, 4}) == Catch::Approx(0.8).margin(1e-15));
    CHECK_THROWS_AS(dsla::spearman({1, 1, 1}, {1, 2, 3}), dsla::MetricUndefined);
}

TEST_CASE("metrics agree with brute-force oracles on 200 random cases") {
    dsla::Rng rng(99);
    for (int t = 0; t < 200; ++t) {
        const int n = 3 + static_cast<int>(rng.index(20));
        std::vector<double> scores(n);
        std::vector<int> labels(n);
        // quantized scores so ties actually occur
        for (int i = 0; i < n; ++i) scores[i] = std::floor(rng.uniform() * 8.0) / 8.0;
        bool has_pos = false, has_neg = false;
        for (int i = 0; i < n; ++i) {
            labels[i] = rng.bernoulli(0.4) ? 1 : 0;
            (labels[i] ? has_pos : has_neg) = true;
        }
        if (!has_pos || !has_neg) continue;
        CHECK(std::abs(dsla::roc_auc(scores, labels) - auc_oracle(scores, labels)) < 1e-12);
        CHECK(std::abs(dsla::average_precision(scores, labels) - ap_oracle(scores, labels)) < 1e-12);
        std::vector<double> ys(n);
        for (int i = 0; i < n; ++i) ys[i] = std::floor(rng.uniform() * 8.0) / 8.0;
        try {
            const double got = dsla::spearman(scores, ys);
            CHECK(std::abs(got - spearman_oracle(scores, ys)) < 1e-12);
        } catch (const dsla::MetricUndefined&) {
        }
    }
}

TEST_CASE("metric invariances") {
    dsla::Rng rng(7);
    for (int t = 0; t < 30; ++t) {
        const int n = 5 + static_cast<int>(rng.index(10));
        std::vector<double> scores(n);
        std::vector<int> labels(n);
        bool has_pos = false, has_neg = false;
        for (int i = 0; i < n; ++i) {
            scores[i] = rng.uniform();
            labels[i] = rng.bernoulli(0.5) ? 1 : 0;
            (labels[i] ? has_pos : has_neg) = true;
        }
        if (!has_pos || !has_neg) continue;
        // strictly monotone transform: exp(3x) + 1
        std::vector<double> warped(n);
        for (int i = 0; i < n; ++i) warped[i] = std::exp(3.0 * scores[i]) + 1.0;
        CHECK(std::abs(dsla::roc_auc(scores, labels) - dsla::roc_auc(warped, labels)) < 1e-12);
        CHECK(std::abs(dsla::average_precision(scores, labels) -
                       dsla::average_precision(warped, labels)) < 1e-12);
        std::vector<double> ys(n);
        for (int i = 0; i < n; ++i) ys[i] = rng.uniform();
        CHECK(std::abs(dsla::spearman(scores, ys) - dsla::spearman(warped, ys)) < 1e-12);
        // complement under score negation (tie-free with probability 1)
        std::vector<double> negated(n);
        for (int i = 0; i < n; ++i) negated[i] = -scores[i];
        CHECK(std::abs(dsla::roc_auc(scores, labels) + dsla::roc_auc(negated, labels) - 1.0) < 1e-12);
    }
}

TEST_CASE("pca on collinear points captures all variance in one component") {
    dsla::Rng rng(11);
    std::vector<std::vector<double>> rows;
    std::vector<double> dir{1.0, -2.0, 0.5, 3.0, 1.5};
    for (int i = 0; i < 40; ++i) {
        const double t = 4.0 * rng.uniform() - 2.0;
        std::vector<double> r(5);
        for (int c = 0; c < 5; ++c) r[c] = t * dir[c];
        rows.push_back(r);
    }
    auto res = dsla::pca_project(rows, 2);
    REQUIRE(res.explained_ratio.size() == 2);
    CHECK(res.explained_ratio[0] == Catch::Approx(1.0).margin(1e-9));
    CHECK(res.explained_ratio[1] == Catch::Approx(0.0).margin(1e-9));
    for (const auto& r : res.coords) CHECK(std::abs(r[1]) < 1e-6);
}

TEST_CASE("pca explained ratios on an isotropic sample are roughly equal") {
    dsla::Rng rng(12);
    std::vector<std::vector<double>> rows;
    for (int i = 0; i < 2000; ++i) {
        std::vector<double> r(2);
        // sum of uniforms ~ normal enough for symmetry here
        for (int c = 0; c < 2; ++c) {
            double acc = 0.0;
            for (int k = 0; k < 8; ++k) acc += rng.uniform() - 0.5;
            r[c] = acc;
        }
        rows.push_back(r);
    }
    auto res = dsla::pca_project(rows, 2);
    CHECK(std::abs(res.explained_ratio[0] - res.explained_ratio[1]) < 0.1);
}

TEST_CASE("pca preserves pairwise distances for data already in a 2D subspace") {
    dsla::Rng rng(13);
    std::vector<std::vector<double>> rows;
    std::vector<double> u{1, 0, 2, 0}, v{0, 3, 0, -1};
    std::vector<std::pair<double, double>> ts;
    for (int i = 0; i < 25; ++i) {
        const double a = rng.uniform() * 2 - 1, b = rng.uniform() * 2 - 1;
        ts.emplace_back(a, b);
        std::vector<double> r(4);
        for (int c = 0; c < 4; ++c) r[c] = a * u[c] + b * v[c];
        rows.push_back(r);
    }
    auto res = dsla::pca_project(rows, 2);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = i + 1; j < rows.size(); ++j) {
            double d_orig = 0.0, d_proj = 0.0;
            for (int c = 0; c < 4; ++c)
                d_orig += (rows[i][c] - rows[j][c]) * (rows[i][c] - rows[j][c]);
            for (int c = 0; c < 2; ++c)
                d_proj += (res.coords[i][c] - res.coords[j][c]) * (res.coords[i][c] - res.coords[j][c]);
            CHECK(std::abs(std::sqrt(d_orig) - std::sqrt(d_proj)) < 1e-9);
        }
}

TEST_CASE("rank correlation analysis with an injected-distance embedder is exactly one") {
    // Test hook: the analysis embeds the anchor first, then rungs in magnitude
    // order. Returning the call index as a 1-D embedding makes the embedding
    // distance to the anchor equal the rung position; on a dense graph the
    // ladder's edit distances are strictly increasing too, so the rank
    // agreement must be exact.
    dsla::Rng grng(21);
    std::vector<Graph> single{random_er_graph(14, 0.5, grng)};
    int calls = 0;
    auto embed = [&](const Graph&) { return std::vector<double>{static_cast<double>(calls++)}; };
    auto report = dsla::rank_correlation_analysis(embed, single, 1, 77);
    REQUIRE(report.rows.size() == 1);
    CHECK(report.rows[0].coefficient == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("rank correlation analysis skips degenerate embedders") {
    dsla::Rng grng(22);
    std::vector<Graph> corpus{random_er_graph(14, 0.5, grng)};
    auto constant = [](const Graph&) { return std::vector<double>{1.0, 2.0}; };
    CHECK_THROWS_AS(dsla::rank_correlation_analysis(constant, corpus, 1, 5), dsla::MetricUndefined);
}

TEST_CASE("rank ladder magnitudes and edit distances are increasing for dense graphs") {
    dsla::Rng grng(23), rng(24);
    Graph g = random_er_graph(16, 0.6, grng);
    auto ladder = dsla::build_rank_ladder(g, dsla::ladder_magnitudes(), {}, rng);
    REQUIRE(ladder.rungs.size() == 9);
    int prev = 0;
    for (const auto& rec : ladder.rungs) {
        CHECK(rec.edit_distance >= 1);
        CHECK(rec.edit_distance >= prev);
        prev = rec.edit_distance;
    }
}
