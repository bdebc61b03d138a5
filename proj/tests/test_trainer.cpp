#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "dsla/trainer.hpp"
#include "test_util.hpp"

using dsla::AdamState;
using dsla::Checkpoint;
using dsla::Dataset;
using dsla::GradMap;
using dsla::Tensor;
using dsla::TrainConfig;
using dsla_test::TempDir;

namespace {

TrainConfig tiny_cfg(const Dataset& ds, int epochs = 2, int dim = 8) {
    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.batch_size = 8;
    cfg.lr = 1e-3;
    cfg.encoder.arch = dsla::Arch::GIN;
    cfg.encoder.num_layers = 2;
    cfg.encoder.dim = dim;
    cfg.encoder.node_vocab = ds.node_vocab;
    cfg.encoder.edge_vocab = ds.edge_vocab;
    cfg.perturb.ratios = {0.2, 0.4};
    cfg.perturb.hop_k = 2;
    cfg.seed = 7;
    return cfg;
}

Dataset synth(int count, std::uint64_t seed, double p = 0.35, int n = 9) {
    return dsla::generate_synthetic(
        "erdos-renyi", {{"n", static_cast<double>(n)}, {"p", p}, {"node_vocab", 4}, {"edge_vocab", 3}},
        count, seed);
}

}  // namespace

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
    std::map<std::string, Tensor> params{{"w", Tensor::from(1, 2, {0.5, -0.25})}};
    GradMap grads{{"w", Tensor(1, 2)}};
    AdamState st;
    dsla::adam_step(params, grads, st, 0.1);
    CHECK(params.at("w").at(0, 0) == 0.5);
    CHECK(params.at("w").at(0, 1) == -0.25);
}

TEST_CASE("adam: closed-form first step") {
    std::map<std::string, Tensor> params{{"w", Tensor::scalar(0.0)}};
    GradMap grads{{"w", Tensor::scalar(1.0)}};
    AdamState st;
    dsla::adam_step(params, grads, st, 0.1);
    // m̂ = v̂ = 1 after bias correction, so θ = -0.1 / (1 + 1e-8)
    CHECK(params.at("w").item() == Catch::Approx(-0.1 / (1.0 + 1e-8)).epsilon(1e-12));
}

TEST_CASE("adam: descends theta squared monotonically after warmup") {
    std::map<std::string, Tensor> params{{"w", Tensor::scalar(1.3)}};
    AdamState st;
    std::vector<double> f;
    for (int t = 0; t < 10; ++t) {
        const double theta = params.at("w").item();
        f.push_back(theta * theta);
        GradMap grads{{"w", Tensor::scalar(2.0 * theta)}};
        dsla::adam_step(params, grads, st, 0.05);
    }
    for (std::size_t i = 2; i + 1 < f.size(); ++i) CHECK(f[i + 1] < f[i]);
}

TEST_CASE("adam: non-finite gradient names the parameter") {
    std::map<std::string, Tensor> params{{"bad.param", Tensor::scalar(0.0)}};
    GradMap grads{{"bad.param", Tensor::scalar(std::numeric_limits<double>::infinity())}};
    AdamState st;
    try {
        dsla::adam_step(params, grads, st, 0.1);
        FAIL("expected NumericError");
    } catch (const dsla::NumericError& e) {
        CHECK(std::string(e.what()).find("bad.param") != std::string::npos);
    }
}

TEST_CASE("checkpoint round trip is byte-identical and reproduces outputs") {
    Dataset ds = synth(12, 31);
    TrainConfig cfg = tiny_cfg(ds, 2);
    dsla::PretrainResult result = dsla::pretrain(ds, cfg);

    TempDir tmp("ckpt");
    const auto p1 = tmp.path() / "a.dsla";
    const auto p2 = tmp.path() / "b.dsla";
    result.checkpoint.save(p1.string());
    Checkpoint loaded = Checkpoint::load(p1.string());
    loaded.save(p2.string());
    CHECK(dsla_test::read_file(p1) == dsla_test::read_file(p2));

    // bit-identical forward outputs from the reloaded parameters
    Tensor before = dsla::embed_graph(ds.graphs[0], result.checkpoint.params, cfg.encoder);
    Tensor after = dsla::embed_graph(ds.graphs[0], loaded.params, cfg.encoder);
    for (std::size_t i = 0; i < before.size(); ++i) CHECK((*before.data)[i] == (*after.data)[i]);

    CHECK(dsla::checkpoint_mismatch(loaded.cfg, cfg.encoder).empty());
    dsla::EncoderConfig other = cfg.encoder;
    other.dim = 99;
    CHECK_FALSE(dsla::checkpoint_mismatch(loaded.cfg, other).empty());
}

TEST_CASE("ratio-zero smoke mode: initial discrimination loss is ln(n+1)") {
    Dataset ds = synth(8, 5);
    TrainConfig cfg = tiny_cfg(ds, 1);
    cfg.perturb.ratios = {0.0, 0.0, 0.0};
    cfg.perturb.node_mask_ratio = 0.0;
    cfg.loss.lambda1 = 0.0;
    cfg.loss.lambda2 = 0.0;
    cfg.loss.use_edit = false;
    cfg.loss.use_margin = false;
    dsla::PretrainResult result = dsla::pretrain(ds, cfg);
    REQUIRE_FALSE(result.history.empty());
    CHECK(result.history[0].gd == Catch::Approx(std::log(4.0)).margin(1e-9));
}

TEST_CASE("pretraining is deterministic and accounts for every graph") {
    Dataset ds = synth(14, 8);
    TrainConfig cfg = tiny_cfg(ds, 3);
    TempDir tmp("det");
    cfg.out_dir = (tmp.path() / "run1").string();
    dsla::PretrainResult r1 = dsla::pretrain(ds, cfg);
    cfg.out_dir = (tmp.path() / "run2").string();
    dsla::PretrainResult r2 = dsla::pretrain(ds, cfg);

    REQUIRE(r1.history.size() == r2.history.size());
    for (std::size_t i = 0; i < r1.history.size(); ++i) {
        CHECK(r1.history[i].total == r2.history[i].total);
        CHECK(r1.history[i].gd == r2.history[i].gd);
    }
    CHECK(dsla_test::read_file(tmp.path() / "run1" / "loss_history.csv") ==
          dsla_test::read_file(tmp.path() / "run2" / "loss_history.csv"));
    CHECK(dsla_test::read_file(tmp.path() / "run1" / "checkpoint.dsla") ==
          dsla_test::read_file(tmp.path() / "run2" / "checkpoint.dsla"));

    CHECK(r1.processed_graphs + r1.skipped_graphs == 3 * 14);
}

TEST_CASE("worker count does not change results") {
    Dataset ds = synth(10, 9);
    TrainConfig cfg = tiny_cfg(ds, 2);
    cfg.workers = 1;
    dsla::PretrainResult r1 = dsla::pretrain(ds, cfg);
    cfg.workers = 4;
    dsla::PretrainResult r4 = dsla::pretrain(ds, cfg);
    REQUIRE(r1.history.size() == r4.history.size());
    for (std::size_t i = 0; i < r1.history.size(); ++i)
        CHECK(r1.history[i].total == r4.history[i].total);
}

TEST_CASE("baseline objectives run and report finite losses") {
    Dataset ds = synth(10, 10);
    for (const char* obj : {"contrastive", "attrmask", "edgepred"}) {
        TrainConfig cfg = tiny_cfg(ds, 1);
        cfg.objective = dsla::objective_from_name(obj);
        cfg.perturb.node_mask_ratio = 0.3;
        dsla::PretrainResult result = dsla::pretrain(ds, cfg);
        REQUIRE_FALSE(result.history.empty());
        for (const auto& row : result.history) CHECK(std::isfinite(row.total));
    }
}

TEST_CASE("fine-tuning separates a linearly separable dataset") {
    // class 1 graphs are dense, class 0 sparse; degree attributes make the
    // classes separable from the first embedding layer onward
    Dataset dense = dsla::generate_synthetic(
        "erdos-renyi", {{"n", 10.0}, {"p", 0.75}, {"node_vocab", 12}, {"edge_vocab", 2}, {"degree_attrs", 1}},
        30, 21);
    Dataset sparse = dsla::generate_synthetic(
        "erdos-renyi", {{"n", 10.0}, {"p", 0.15}, {"node_vocab", 12}, {"edge_vocab", 2}, {"degree_attrs", 1}},
        30, 22);
    Dataset all;
    all.name = "separable";
    all.node_vocab = 12;
    all.edge_vocab = 2;
    all.num_tasks = 1;
    for (std::size_t i = 0; i < dense.size(); ++i) {
        all.graphs.push_back(dense.graphs[i]);
        all.labels.push_back({1});
        all.graphs.push_back(sparse.graphs[i]);
        all.labels.push_back({0});
    }
    auto named = dsla::split(all, dsla::SplitSpec::parse_ratio("3:1:2", 5));

    TrainConfig cfg = tiny_cfg(all, 1, 16);
    cfg.finetune_epochs = 20;
    cfg.lr = 5e-3;
    dsla::MetricsReport report = dsla::finetune_classify(nullptr, named, cfg, {1, 2});
    CHECK(report.mean > 0.95);
}

TEST_CASE("degenerate labels exercise the excluded-task path") {
    Dataset ds = synth(12, 23);
    ds.num_tasks = 1;
    for (std::size_t i = 0; i < ds.size(); ++i) ds.labels.push_back({1});  // single class
    auto named = dsla::split(ds, dsla::SplitSpec::parse_ratio("2:1:1", 3));
    TrainConfig cfg = tiny_cfg(ds, 1);
    cfg.finetune_epochs = 2;
    dsla::ClassifyRunResult r = dsla::finetune_classify_run(nullptr, named, cfg, 1);
    CHECK(std::isnan(r.test_auc));
    CHECK(r.excluded_test_tasks == 1);
}

TEST_CASE("link prediction pipeline runs end to end") {
    Dataset ds = dsla::generate_synthetic(
        "erdos-renyi",
        {{"n", 12.0}, {"p", 0.5}, {"node_vocab", 16}, {"edge_vocab", 1}, {"degree_attrs", 1}}, 30, 33);
    auto parts = dsla::split(ds, dsla::SplitSpec::parse_ratio("5:1:1:3", 4));
    std::map<std::string, Dataset> named{{"train", parts.at("train")},
                                         {"valid", parts.at("valid")},
                                         {"test", parts.at("test")}};
    TrainConfig cfg = tiny_cfg(ds, 1);
    cfg.encoder.arch = dsla::Arch::GCN;
    cfg.encoder.num_layers = 2;
    cfg.finetune_epochs = 4;
    cfg.link_holdout = 5;
    dsla::MetricsReport report = dsla::finetune_link(nullptr, named, cfg, {1, 2});
    for (double ap : report.per_seed) {
        CHECK(ap >= 0.0);
        CHECK(ap <= 1.0);
    }
    // evaluation pairs are fixed by the split seed: re-running a seed
    // reproduces the identical AP
    dsla::MetricsReport again = dsla::finetune_link(nullptr, named, cfg, {1});
    CHECK(again.per_seed[0] == report.per_seed[0]);
}

TEST_CASE("ablation grid produces one deterministic row per cell") {
    Dataset labeled = dsla::generate_synthetic(
        "motif", {{"n", 10.0}, {"p", 0.12}, {"k", 4.0}, {"node_vocab", 4}, {"edge_vocab", 2}}, 24, 44);
    auto parts = dsla::split(labeled, dsla::SplitSpec::parse_ratio("5:1:1:3", 6));
    std::map<std::string, Dataset> named{{"pretrain", parts.at("pretrain")},
                                         {"train", parts.at("train")},
                                         {"valid", parts.at("valid")},
                                         {"test", parts.at("test")}};
    TrainConfig cfg = tiny_cfg(labeled, 2);
    cfg.finetune_epochs = 2;
    cfg.batch_size = 6;
    auto grid = dsla::default_loss_grid();
    auto rows1 = dsla::ablate(named, cfg, grid, {1, 2});
    REQUIRE(rows1.size() == 5);
    for (const auto& row : rows1) CHECK_FALSE(row.failed);

    TempDir tmp("ablate");
    auto rows2 = dsla::ablate(named, cfg, grid, {1, 2});
    dsla::write_ablation_csv(rows1, (tmp.path() / "a.csv").string());
    dsla::write_ablation_csv(rows2, (tmp.path() / "b.csv").string());
    CHECK(dsla_test::read_file(tmp.path() / "a.csv") == dsla_test::read_file(tmp.path() / "b.csv"));
}
