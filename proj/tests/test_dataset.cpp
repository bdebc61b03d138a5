#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <set>

#include "dsla/dataset.hpp"
#include "test_util.hpp"

using dsla::Dataset;
using dsla::Graph;
using dsla::SplitSpec;
using dsla_test::TempDir;
using dsla_test::write_file;

namespace {

// two triangles, with node/edge/graph labels
void write_two_triangle_fixture(const std::filesystem::path& dir, const std::string& name) {
    write_file(dir / (name + "_A.txt"),
               "1, 2\n2, 1\n2, 3\n3, 2\n1, 3\n3, 1\n"
               "4, 5\n5, 4\n5, 6\n6, 5\n4, 6\n6, 4\n");
    write_file(dir / (name + "_graph_indicator.txt"), "1\n1\n1\n2\n2\n2\n");
    write_file(dir / (name + "_node_labels.txt"), "7\n8\n7\n8\n7\n8\n");
    write_file(dir / (name + "_edge_labels.txt"), "0\n0\n1\n1\n0\n0\n1\n1\n0\n0\n1\n1\n");
    write_file(dir / (name + "_graph_labels.txt"), "-1\n1\n");
}

}  // namespace

TEST_CASE("TU loader round-trips the two-triangle fixture") {
    TempDir tmp("tu");
    write_two_triangle_fixture(tmp.path(), "TOY");
    Dataset ds = dsla::load_tu_dataset(tmp.path().string(), "TOY");
    REQUIRE(ds.size() == 2);
    for (const Graph& g : ds.graphs) {
        CHECK(g.num_nodes() == 3);
        CHECK(g.num_edges() == 3);
    }
    CHECK(ds.node_vocab == 2);  // labels {7,8} compacted
    CHECK(ds.edge_vocab == 2);
    REQUIRE(ds.labeled());
    CHECK(ds.num_tasks == 1);
    CHECK(ds.labels[0] == std::vector<int>{0});  // {-1,1} -> {0,1}
    CHECK(ds.labels[1] == std::vector<int>{1});
}

TEST_CASE("TU loader synthesizes degree attributes when node labels are missing") {
    TempDir tmp("tu_deg");
    write_file(tmp.path() / "D_A.txt", "1, 2\n2, 1\n2, 3\n3, 2\n");
    write_file(tmp.path() / "D_graph_indicator.txt", "1\n1\n1\n");
    Dataset ds = dsla::load_tu_dataset(tmp.path().string(), "D");
    REQUIRE(ds.size() == 1);
    CHECK(ds.graphs[0].node_attrs() == std::vector<int>{1, 2, 1});  // path degrees
    CHECK(ds.node_vocab == 3);
}

TEST_CASE("TU loader error paths") {
    TempDir tmp("tu_err");
    SECTION("missing mandatory file") {
        CHECK_THROWS_AS(dsla::load_tu_dataset(tmp.path().string(), "NOPE"), dsla::LoadError);
    }
    SECTION("dangling node reference") {
        write_file(tmp.path() / "X_A.txt", "1, 9\n");
        write_file(tmp.path() / "X_graph_indicator.txt", "1\n1\n");
        CHECK_THROWS_AS(dsla::load_tu_dataset(tmp.path().string(), "X"), dsla::ParseError);
    }
    SECTION("non-integer token") {
        write_file(tmp.path() / "Y_A.txt", "1, fish\n");
        write_file(tmp.path() / "Y_graph_indicator.txt", "1\n1\n");
        CHECK_THROWS_AS(dsla::load_tu_dataset(tmp.path().string(), "Y"), dsla::ParseError);
    }
}

TEST_CASE("jsonl single-line triangle") {
    TempDir tmp("jsonl");
    auto path = tmp.path() / "tri.jsonl";
    write_file(path,
               R"({"num_nodes": 3, "edges": [[0,1],[1,2],[0,2]], "node_attrs": [0,1,0], "edge_attrs": [0,0,1]})"
               "\n");
    Dataset ds = dsla::load_jsonl(path.string());
    REQUIRE(ds.size() == 1);
    CHECK(ds.graphs[0].num_edges() == 3);
    CHECK_FALSE(ds.labeled());
}

TEST_CASE("jsonl empty file gives empty dataset") {
    TempDir tmp("jsonl_empty");
    auto path = tmp.path() / "empty.jsonl";
    write_file(path, "");
    Dataset ds = dsla::load_jsonl(path.string());
    CHECK(ds.size() == 0);
}

TEST_CASE("jsonl schema violations carry line numbers") {
    TempDir tmp("jsonl_bad");
    auto path = tmp.path() / "bad.jsonl";
    write_file(path, R"({"num_nodes": 3, "edges": [[0,1]], "node_attrs": [0,0,0], "edge_attrs": [0]})"
                     "\n"
                     R"({"num_nodes": "x"})"
                     "\n");
    try {
        dsla::load_jsonl(path.string());
        FAIL("expected ParseError");
    } catch (const dsla::ParseError& e) {
        CHECK(std::string(e.what()).find(":2:") != std::string::npos);
    }
}

TEST_CASE("jsonl write-read round trip is the identity") {
    dsla::Rng rng(404);
    for (int trial = 0; trial < 10; ++trial) {
        Dataset ds = dsla::generate_synthetic(
            "erdos-renyi", {{"n", 8.0}, {"p", 0.4}, {"node_vocab", 5}, {"edge_vocab", 3}}, 6,
            rng.next_u64());
        // attach random multi-task labels with missing entries
        ds.num_tasks = 2;
        for (std::size_t i = 0; i < ds.size(); ++i) {
            std::vector<int> row;
            for (int t = 0; t < 2; ++t) {
                const auto r = rng.index(3);
                row.push_back(r == 2 ? dsla::kLabelMissing : static_cast<int>(r));
            }
            ds.labels.push_back(row);
        }
        TempDir tmp("roundtrip");
        auto path = tmp.path() / "ds.jsonl";
        dsla::save_jsonl(ds, path.string());
        Dataset back = dsla::load_jsonl(path.string());
        REQUIRE(back.size() == ds.size());
        CHECK(back.node_vocab == ds.node_vocab);
        CHECK(back.edge_vocab == ds.edge_vocab);
        CHECK(back.num_tasks == ds.num_tasks);
        for (std::size_t i = 0; i < ds.size(); ++i) {
            CHECK(back.graphs[i] == ds.graphs[i]);
            CHECK(back.labels[i] == ds.labels[i]);
        }
    }
}

TEST_CASE("synthetic erdos-renyi extremes") {
    Dataset empty = dsla::generate_synthetic("erdos-renyi", {{"n", 10.0}, {"p", 0.0}}, 3, 1);
    for (const Graph& g : empty.graphs) CHECK(g.num_edges() == 0);
    Dataset full = dsla::generate_synthetic("erdos-renyi", {{"n", 10.0}, {"p", 1.0}}, 3, 1);
    for (const Graph& g : full.graphs) CHECK(g.num_edges() == 45);
}

TEST_CASE("synthetic generation is deterministic given the seed") {
    for (const char* family : {"erdos-renyi", "tree", "barabasi", "ring-of-cliques", "motif"}) {
        Dataset a = dsla::generate_synthetic(family, {{"n", 12.0}, {"p", 0.3}, {"m", 2.0}}, 5, 99);
        Dataset b = dsla::generate_synthetic(family, {{"n", 12.0}, {"p", 0.3}, {"m", 2.0}}, 5, 99);
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.graphs[i] == b.graphs[i]);
        CHECK(a.labels == b.labels);
        // byte-identical on disk
        TempDir tmp("det");
        dsla::save_jsonl(a, (tmp.path() / "a.jsonl").string());
        dsla::save_jsonl(b, (tmp.path() / "b.jsonl").string());
        CHECK(dsla_test::read_file(tmp.path() / "a.jsonl") ==
              dsla_test::read_file(tmp.path() / "b.jsonl"));
    }
}

TEST_CASE("synthetic parameter validation") {
    CHECK_THROWS_AS(dsla::generate_synthetic("erdos-renyi", {{"n", 10.0}, {"p", 1.5}}, 2, 0),
                    dsla::ConfigError);
    CHECK_THROWS_AS(dsla::generate_synthetic("no-such-family", {}, 2, 0), dsla::ConfigError);
}

TEST_CASE("split 5:1:1:3 of ten graphs") {
    Dataset ds = dsla::generate_synthetic("erdos-renyi", {{"n", 6.0}, {"p", 0.5}}, 10, 3);
    auto parts = dsla::split(ds, SplitSpec::parse_ratio("5:1:1:3", 11));
    CHECK(parts.at("pretrain").size() == 5);
    CHECK(parts.at("train").size() == 1);
    CHECK(parts.at("valid").size() == 1);
    CHECK(parts.at("test").size() == 3);
}

TEST_CASE("split 8:2 of one hundred graphs") {
    Dataset ds = dsla::generate_synthetic("erdos-renyi", {{"n", 5.0}, {"p", 0.5}}, 100, 4);
    auto parts = dsla::split(ds, SplitSpec::parse_ratio("8:2", 12));
    CHECK(parts.at("train").size() == 80);
    CHECK(parts.at("test").size() == 20);
}

TEST_CASE("split determinism and partition property") {
    Dataset ds = dsla::generate_synthetic("erdos-renyi", {{"n", 7.0}, {"p", 0.4}}, 23, 5);
    SplitSpec spec = SplitSpec::parse_ratio("5:1:1:3", 77);
    auto p1 = dsla::split(ds, spec);
    auto p2 = dsla::split(ds, spec);
    for (const auto& [name, part] : p1) {
        REQUIRE(p2.at(name).size() == part.size());
        for (std::size_t i = 0; i < part.size(); ++i) CHECK(p2.at(name).graphs[i] == part.graphs[i]);
    }
    // multiset union of parts equals the input (graphs keyed by jsonl dump)
    std::multiset<std::string> original, recombined;
    TempDir tmp("splitparts");
    auto key = [&](const Graph& g) {
        Dataset one;
        one.graphs = {g};
        one.node_vocab = ds.node_vocab;
        one.edge_vocab = ds.edge_vocab;
        auto p = tmp.path() / "one.jsonl";
        dsla::save_jsonl(one, p.string());
        return dsla_test::read_file(p);
    };
    for (const Graph& g : ds.graphs) original.insert(key(g));
    for (const auto& [name, part] : p1)
        for (const Graph& g : part.graphs) recombined.insert(key(g));
    CHECK(original == recombined);
}

TEST_CASE("split rejects configurations with empty parts") {
    Dataset ds = dsla::generate_synthetic("erdos-renyi", {{"n", 5.0}, {"p", 0.5}}, 3, 6);
    CHECK_THROWS_AS(dsla::split(ds, SplitSpec::parse_ratio("5:1:1:3", 0)), dsla::ConfigError);
}

TEST_CASE("edge attribute distribution") {
    SECTION("direct count") {
        Dataset ds;
        ds.node_vocab = 2;
        ds.edge_vocab = 2;
        ds.graphs.push_back(Graph(3, {dsla::Edge(0, 1), dsla::Edge(1, 2)}, {0, 0, 0}, {0, 1}, 2, 2));
        ds.graphs.push_back(Graph(3, {dsla::Edge(0, 1), dsla::Edge(1, 2)}, {0, 0, 0}, {0, 1}, 2, 2));
        auto dist = dsla::fit_edge_attr_distribution(ds);
        REQUIRE(dist.size() == 2);
        CHECK(dist[0] == Catch::Approx(0.5));
        CHECK(dist[1] == Catch::Approx(0.5));
    }
    SECTION("point mass") {
        Dataset ds;
        ds.edge_vocab = 3;
        ds.node_vocab = 2;
        ds.graphs.push_back(Graph(2, {dsla::Edge(0, 1)}, {0, 0}, {2}, 2, 3));
        auto dist = dsla::fit_edge_attr_distribution(ds);
        CHECK(dist == std::vector<double>{0.0, 0.0, 1.0});
    }
    SECTION("random corpus matches histogram oracle and sums to one") {
        Dataset ds = dsla::generate_synthetic("erdos-renyi",
                                              {{"n", 9.0}, {"p", 0.5}, {"edge_vocab", 4}}, 12, 8);
        auto dist = dsla::fit_edge_attr_distribution(ds);
        std::vector<double> counts(4, 0.0);
        double total = 0.0;
        for (const Graph& g : ds.graphs)
            for (int a : g.edge_attrs()) {
                counts[a] += 1.0;
                total += 1.0;
            }
        double sum = 0.0;
        for (std::size_t i = 0; i < dist.size(); ++i) {
            CHECK(dist[i] == Catch::Approx(counts[i] / total).margin(1e-15));
            CHECK(dist[i] >= 0.0);
            sum += dist[i];
        }
        CHECK(std::abs(sum - 1.0) < 1e-12);
    }
    SECTION("edgeless corpus is degenerate") {
        Dataset ds = dsla::generate_synthetic("erdos-renyi", {{"n", 5.0}, {"p", 0.0}}, 2, 9);
        CHECK_THROWS_AS(dsla::fit_edge_attr_distribution(ds), dsla::ConfigError);
    }
}

TEST_CASE("loaders validate graph invariants on corrupted files") {
    TempDir tmp("fuzz");
    auto path = tmp.path() / "bad.jsonl";
    SECTION("self-loop") {
        write_file(path, R"({"num_nodes": 2, "edges": [[1,1]], "node_attrs": [0,0], "edge_attrs": [0]})" "\n");
        CHECK_THROWS_AS(dsla::load_jsonl(path.string()), dsla::ParseError);
    }
    SECTION("duplicate edge") {
        write_file(path, R"({"num_nodes": 2, "edges": [[0,1],[1,0]], "node_attrs": [0,0], "edge_attrs": [0,0]})" "\n");
        CHECK_THROWS_AS(dsla::load_jsonl(path.string()), dsla::ParseError);
    }
    SECTION("edge out of range") {
        write_file(path, R"({"num_nodes": 2, "edges": [[0,5]], "node_attrs": [0,0], "edge_attrs": [0]})" "\n");
        CHECK_THROWS_AS(dsla::load_jsonl(path.string()), dsla::ParseError);
    }
}
