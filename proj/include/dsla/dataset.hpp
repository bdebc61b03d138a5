// Dataset ingestion (TU benchmark text format, JSON lines), synthetic graph
// generation, and deterministic splitting.
#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dsla/errors.hpp"
#include "dsla/graph.hpp"
#include "dsla/rng.hpp"

namespace dsla {

// Label entries are per-task: 0 negative, 1 positive, -1 missing.
inline constexpr int kLabelMissing = -1;

struct Dataset {
    std::string name;
    std::vector<Graph> graphs;
    std::vector<std::vector<int>> labels;  // empty when unlabeled
    int num_tasks = 0;
    int node_vocab = 1;
    int edge_vocab = 1;

    std::size_t size() const { return graphs.size(); }
    bool labeled() const { return !labels.empty(); }
};

struct SplitSpec {
    std::vector<std::pair<std::string, double>> parts;
    std::uint64_t seed = 0;

    void validate() const {
        if (parts.empty()) throw ConfigError("split: no parts");
        double total = 0.0;
        for (const auto& [name, f] : parts) {
            if (f <= 0.0) throw ConfigError("split: fraction for '" + name + "' must be positive");
            total += f;
        }
        if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split: fractions must sum to 1");
    }

    // "5:1:1:3" with default part names, or "pretrain=5,train=1,..."
    static SplitSpec parse_ratio(const std::string& text, std::uint64_t seed) {
        static const char* kDefaultNames[] = {"pretrain", "train", "valid", "test"};
        std::vector<double> weights;
        std::string token;
        std::istringstream is(text);
        while (std::getline(is, token, ':')) weights.push_back(std::stod(token));
        double total = 0.0;
        for (double w : weights) total += w;
        if (total <= 0.0) throw ConfigError("split: ratio weights must be positive");
        SplitSpec spec;
        spec.seed = seed;
        // a 2-way ratio means train/test
        for (std::size_t i = 0; i < weights.size(); ++i) {
            std::string name;
            if (weights.size() == 2)
                name = i == 0 ? "train" : "test";
            else if (weights.size() <= 4)
                name = kDefaultNames[i + (4 - weights.size())];
            else
                name = "part" + std::to_string(i);
            spec.parts.emplace_back(name, weights[i] / total);
        }
        if (weights.size() == 4) {
            spec.parts[0].first = "pretrain";
            spec.parts[1].first = "train";
            spec.parts[2].first = "valid";
            spec.parts[3].first = "test";
        }
        return spec;
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline long parse_long(const std::string& token, const std::string& file, long line) {
    const std::string t = trim(token);
    long value = 0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
    if (ec != std::errc() || ptr != t.data() + t.size())
        throw ParseError(file, line, "expected integer, got '" + t + "'");
    return value;
}

// Reads one integer per line (TU label files allow a few comma-separated
// variants; we take the first field).
inline std::vector<long> read_int_column(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open " + path.string());
    std::vector<long> out;
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t comma = line.find(',');
        out.push_back(parse_long(comma == std::string::npos ? line : line.substr(0, comma),
                                 path.filename().string(), lineno));
    }
    return out;
}

// Map arbitrary integer labels to contiguous 0-based ids (sorted order).
inline std::map<long, int> compact_ids(const std::vector<long>& values) {
    std::set<long> distinct(values.begin(), values.end());
    std::map<long, int> out;
    int next = 0;
    for (long v : distinct) out[v] = next++;
    return out;
}

}  // namespace detail

/// Load a dataset in the public TU benchmark convention. `dir` contains
/// `<DS>_A.txt` and `<DS>_graph_indicator.txt` (DS = dir basename unless
/// `ds_name` is given); node/edge/graph label files are optional. Graphs with
/// no node labels get their node degree as the attribute, clipped to
/// `max_degree_vocab`.
inline Dataset load_tu_dataset(const std::string& dir, std::string ds_name = "",
                               int max_degree_vocab = 64) {
    namespace fs = std::filesystem;
    fs::path root(dir);
    if (ds_name.empty()) ds_name = root.filename().string();
    const fs::path a_path = root / (ds_name + "_A.txt");
    const fs::path ind_path = root / (ds_name + "_graph_indicator.txt");
    if (!fs::exists(a_path)) throw LoadError("missing " + a_path.string());
    if (!fs::exists(ind_path)) throw LoadError("missing " + ind_path.string());

    const std::vector<long> indicator = detail::read_int_column(ind_path);
    const long num_nodes_total = static_cast<long>(indicator.size());
    long num_graphs = 0;
    for (long g : indicator) num_graphs = std::max(num_graphs, g);
    if (num_graphs <= 0) throw ParseError(ind_path.string(), 1, "no graphs declared");

    // global (1-based) node id -> (graph, local 0-based id)
    std::vector<int> graph_of(num_nodes_total), local_id(num_nodes_total);
    std::vector<int> nodes_per_graph(num_graphs, 0);
    for (long i = 0; i < num_nodes_total; ++i) {
        const long g = indicator[i];
        if (g < 1 || g > num_graphs)
            throw ParseError(ind_path.filename().string(), i + 1, "graph indicator out of range");
        graph_of[i] = static_cast<int>(g - 1);
        local_id[i] = nodes_per_graph[g - 1]++;
    }

    // adjacency rows "u, v"; duplicate directed pairs merge into one edge
    std::ifstream a_in(a_path);
    std::vector<std::set<std::pair<int, int>>> edge_sets(num_graphs);
    std::vector<std::map<std::pair<int, int>, long>> first_edge_line(num_graphs);
    std::string line;
    long lineno = 0;
    std::vector<long> edge_line_graph;   // graph of each A.txt row (for edge labels)
    std::vector<std::pair<int, int>> edge_line_pair;
    while (std::getline(a_in, line)) {
        ++lineno;
        line = detail::trim(line);
        if (line.empty()) continue;
        const std::size_t comma = line.find(',');
        if (comma == std::string::npos)
            throw ParseError(a_path.filename().string(), lineno, "expected 'u, v'");
        const long u = detail::parse_long(line.substr(0, comma), a_path.filename().string(), lineno);
        const long v = detail::parse_long(line.substr(comma + 1), a_path.filename().string(), lineno);
        if (u < 1 || u > num_nodes_total || v < 1 || v > num_nodes_total)
            throw ParseError(a_path.filename().string(), lineno, "dangling node reference");
        const int gu = graph_of[u - 1], gv = graph_of[v - 1];
        if (gu != gv)
            throw ParseError(a_path.filename().string(), lineno, "edge crosses graph boundary");
        int lu = local_id[u - 1], lv = local_id[v - 1];
        if (lu == lv) throw ParseError(a_path.filename().string(), lineno, "self-loop");
        if (lu > lv) std::swap(lu, lv);
        edge_line_graph.push_back(gu);
        edge_line_pair.emplace_back(lu, lv);
        if (edge_sets[gu].insert({lu, lv}).second) first_edge_line[gu][{lu, lv}] = lineno - 1;
    }

    // node attributes: labels if present, else degree
    std::vector<int> node_attr_global(num_nodes_total, 0);
    int node_vocab = 1;
    const fs::path nl_path = root / (ds_name + "_node_labels.txt");
    if (fs::exists(nl_path)) {
        const std::vector<long> raw = detail::read_int_column(nl_path);
        if (static_cast<long>(raw.size()) != num_nodes_total)
            throw ParseError(nl_path.string(), static_cast<long>(raw.size()),
                             "node label count != node count");
        auto ids = detail::compact_ids(raw);
        for (long i = 0; i < num_nodes_total; ++i) node_attr_global[i] = ids.at(raw[i]);
        node_vocab = static_cast<int>(ids.size());
    } else {
        // degrees from merged undirected edges
        std::vector<std::vector<int>> local_deg(num_graphs);
        for (long g = 0; g < num_graphs; ++g) local_deg[g].assign(nodes_per_graph[g], 0);
        for (long g = 0; g < num_graphs; ++g)
            for (const auto& [u, v] : edge_sets[g]) {
                ++local_deg[g][u];
                ++local_deg[g][v];
            }
        int max_deg = 0;
        for (long i = 0; i < num_nodes_total; ++i) {
            const int d = local_deg[graph_of[i]][local_id[i]];
            node_attr_global[i] = std::min(d, max_degree_vocab - 1);
            max_deg = std::max(max_deg, node_attr_global[i]);
        }
        node_vocab = max_deg + 1;
    }

    // edge attributes: labels if present (first occurrence wins on merge)
    int edge_vocab = 1;
    std::vector<int> edge_attr_by_line;
    const fs::path el_path = root / (ds_name + "_edge_labels.txt");
    if (fs::exists(el_path)) {
        const std::vector<long> raw = detail::read_int_column(el_path);
        if (raw.size() != edge_line_pair.size())
            throw ParseError(el_path.string(), static_cast<long>(raw.size()),
                             "edge label count != adjacency row count");
        auto ids = detail::compact_ids(raw);
        edge_attr_by_line.resize(raw.size());
        for (std::size_t i = 0; i < raw.size(); ++i) edge_attr_by_line[i] = ids.at(raw[i]);
        edge_vocab = static_cast<int>(ids.size());
    }

    Dataset ds;
    ds.name = ds_name;
    ds.node_vocab = node_vocab;
    ds.edge_vocab = edge_vocab;
    std::vector<std::vector<int>> attrs_per_graph(num_graphs);
    for (long g = 0; g < num_graphs; ++g) attrs_per_graph[g].assign(nodes_per_graph[g], 0);
    for (long i = 0; i < num_nodes_total; ++i)
        attrs_per_graph[graph_of[i]][local_id[i]] = node_attr_global[i];

    for (long g = 0; g < num_graphs; ++g) {
        std::vector<Edge> edges;
        std::vector<int> eattrs;
        for (const auto& [u, v] : edge_sets[g]) {
            edges.emplace_back(u, v);
            eattrs.push_back(edge_attr_by_line.empty()
                                 ? 0
                                 : edge_attr_by_line[first_edge_line[g].at({u, v})]);
        }
        ds.graphs.emplace_back(nodes_per_graph[g], std::move(edges), std::move(attrs_per_graph[g]),
                               std::move(eattrs), node_vocab, edge_vocab);
    }

    const fs::path gl_path = root / (ds_name + "_graph_labels.txt");
    if (fs::exists(gl_path)) {
        const std::vector<long> raw = detail::read_int_column(gl_path);
        if (static_cast<long>(raw.size()) != num_graphs)
            throw ParseError(gl_path.string(), static_cast<long>(raw.size()),
                             "graph label count != graph count");
        auto ids = detail::compact_ids(raw);  // {1,2,...} or {-1,1} -> 0-based classes
        const int num_classes = static_cast<int>(ids.size());
        ds.num_tasks = num_classes <= 2 ? 1 : num_classes;  // one-vs-rest beyond binary
        ds.labels.resize(num_graphs);
        for (long g = 0; g < num_graphs; ++g) {
            const int cls = ids.at(raw[g]);
            if (num_classes <= 2)
                ds.labels[g] = {cls};
            else {
                ds.labels[g].assign(num_classes, 0);
                ds.labels[g][cls] = 1;
            }
        }
    }
    return ds;
}

/// One JSON object per line:
/// {"num_nodes": n, "edges": [[u,v],...], "node_attrs": [...], "edge_attrs": [...],
///  "labels": [0|1|null,...], "node_vocab": v, "edge_vocab": v'}
/// labels and vocab fields are optional; absent vocabs are inferred.
inline Dataset load_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open " + path);
    Dataset ds;
    ds.name = std::filesystem::path(path).stem().string();

    struct Row {
        int num_nodes;
        std::vector<Edge> edges;
        std::vector<int> node_attrs, edge_attrs, labels;
        bool has_labels = false;
        int node_vocab = 0, edge_vocab = 0;
    };
    std::vector<Row> rows;
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path, lineno, e.what());
        }
        try {
            Row row;
            row.num_nodes = j.at("num_nodes").get<int>();
            for (const auto& e : j.at("edges")) {
                if (!e.is_array() || e.size() != 2) throw ParseError(path, lineno, "edge is not a pair");
                row.edges.emplace_back(e[0].get<int>(), e[1].get<int>());
            }
            row.node_attrs = j.at("node_attrs").get<std::vector<int>>();
            row.edge_attrs = j.at("edge_attrs").get<std::vector<int>>();
            if (j.contains("labels") && !j["labels"].is_null()) {
                row.has_labels = true;
                for (const auto& l : j["labels"])
                    row.labels.push_back(l.is_null() ? kLabelMissing : l.get<int>());
            }
            if (j.contains("node_vocab")) row.node_vocab = j["node_vocab"].get<int>();
            if (j.contains("edge_vocab")) row.edge_vocab = j["edge_vocab"].get<int>();
            rows.push_back(std::move(row));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path, lineno, e.what());
        }
    }

    int node_vocab = 1, edge_vocab = 1;
    for (const Row& r : rows) {
        node_vocab = std::max(node_vocab, r.node_vocab);
        edge_vocab = std::max(edge_vocab, r.edge_vocab);
        if (r.node_vocab == 0)
            for (int a : r.node_attrs) node_vocab = std::max(node_vocab, a + 1);
        if (r.edge_vocab == 0)
            for (int a : r.edge_attrs) edge_vocab = std::max(edge_vocab, a + 1);
    }
    ds.node_vocab = node_vocab;
    ds.edge_vocab = edge_vocab;

    std::size_t labeled_rows = 0;
    for (const Row& r : rows)
        if (r.has_labels) ++labeled_rows;
    if (labeled_rows != 0 && labeled_rows != rows.size())
        throw ParseError(path, 0, "labels present on some lines but not others");

    long lineno2 = 0;
    for (Row& r : rows) {
        ++lineno2;
        try {
            ds.graphs.emplace_back(r.num_nodes, std::move(r.edges), std::move(r.node_attrs),
                                   std::move(r.edge_attrs), node_vocab, edge_vocab);
        } catch (const std::exception& e) {
            throw ParseError(path, lineno2, e.what());
        }
        if (r.has_labels) ds.labels.push_back(std::move(r.labels));
    }
    if (!ds.labels.empty()) {
        ds.num_tasks = static_cast<int>(ds.labels[0].size());
        for (const auto& l : ds.labels)
            if (static_cast<int>(l.size()) != ds.num_tasks)
                throw ParseError(path, 0, "inconsistent task count across lines");
    }
    return ds;
}

inline void save_jsonl(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw LoadError("cannot write " + path);
    for (std::size_t i = 0; i < ds.graphs.size(); ++i) {
        const Graph& g = ds.graphs[i];
        nlohmann::json j;
        j["num_nodes"] = g.num_nodes();
        auto edges = nlohmann::json::array();
        for (const Edge& e : g.edges()) edges.push_back({e.u, e.v});
        j["edges"] = std::move(edges);
        j["node_attrs"] = g.node_attrs();
        j["edge_attrs"] = g.edge_attrs();
        j["node_vocab"] = ds.node_vocab;
        j["edge_vocab"] = ds.edge_vocab;
        if (ds.labeled()) {
            auto labels = nlohmann::json::array();
            for (int l : ds.labels[i])
                if (l == kLabelMissing)
                    labels.push_back(nullptr);
                else
                    labels.push_back(l);
            j["labels"] = std::move(labels);
        }
        out << j.dump() << "\n";
    }
}

// ---------------------------------------------------------------------------
// Synthetic corpora

namespace detail {

inline int param_int(const std::map<std::string, double>& params, const std::string& key,
                     int fallback) {
    auto it = params.find(key);
    return it == params.end() ? fallback : static_cast<int>(std::llround(it->second));
}

inline double param_real(const std::map<std::string, double>& params, const std::string& key,
                         double fallback) {
    auto it = params.find(key);
    return it == params.end() ? fallback : it->second;
}

inline std::vector<int> random_attrs(int n, int vocab, Rng& rng) {
    std::vector<int> out(n);
    for (int& a : out) a = static_cast<int>(rng.index(vocab));
    return out;
}

inline Graph finish_graph(int n, std::vector<Edge> edges, int node_vocab, int edge_vocab,
                          bool degree_attrs, Rng& rng) {
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    std::vector<int> node_attrs;
    if (degree_attrs) {
        std::vector<int> deg(n, 0);
        for (const Edge& e : edges) {
            ++deg[e.u];
            ++deg[e.v];
        }
        node_attrs.resize(n);
        for (int i = 0; i < n; ++i) node_attrs[i] = std::min(deg[i], node_vocab - 1);
    } else {
        node_attrs = random_attrs(n, node_vocab, rng);
    }
    std::vector<int> edge_attrs = random_attrs(static_cast<int>(edges.size()), edge_vocab, rng);
    return Graph(n, std::move(edges), std::move(node_attrs), std::move(edge_attrs), node_vocab,
                 edge_vocab);
}

}  // namespace detail

/// Families: erdos-renyi (n[, n_min/n_max], p), ring-of-cliques (cliques,
/// clique_size), tree (n), barabasi (n, m), motif (n, p: two-class labeled
/// corpus, class 1 plants a clique, class 0 plants a cycle of the same size).
/// Common params: node_vocab, edge_vocab, degree_attrs (0/1).
inline Dataset generate_synthetic(const std::string& family,
                                  const std::map<std::string, double>& params, int count,
                                  std::uint64_t seed) {
    const int node_vocab = detail::param_int(params, "node_vocab", 8);
    const int edge_vocab = detail::param_int(params, "edge_vocab", 4);
    const bool degree_attrs = detail::param_int(params, "degree_attrs", 0) != 0;
    if (count <= 0) throw ConfigError("generate_synthetic: count must be positive");
    if (node_vocab < 1 || edge_vocab < 1) throw ConfigError("generate_synthetic: vocab must be >= 1");

    Dataset ds;
    ds.name = "synth:" + family;
    ds.node_vocab = node_vocab;
    ds.edge_vocab = edge_vocab;

    for (int idx = 0; idx < count; ++idx) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(idx)));
        const int n_lo = detail::param_int(params, "n_min", detail::param_int(params, "n", 10));
        const int n_hi = detail::param_int(params, "n_max", detail::param_int(params, "n", 10));
        if (n_lo < 1 || n_hi < n_lo) throw ConfigError("generate_synthetic: bad node count range");
        const int n = n_lo + static_cast<int>(rng.index(static_cast<std::size_t>(n_hi - n_lo + 1)));

        std::vector<Edge> edges;
        int label = kLabelMissing;

        if (family == "erdos-renyi" || family == "er") {
            const double p = detail::param_real(params, "p", 0.3);
            if (p < 0.0 || p > 1.0) throw ConfigError("erdos-renyi: p must be in [0,1]");
            for (int u = 0; u < n; ++u)
                for (int v = u + 1; v < n; ++v)
                    if (rng.uniform() < p) edges.emplace_back(u, v);
        } else if (family == "ring-of-cliques") {
            const int k_lo = detail::param_int(params, "cliques_min", detail::param_int(params, "cliques", 4));
            const int k_hi = detail::param_int(params, "cliques_max", detail::param_int(params, "cliques", 4));
            const int c_lo = detail::param_int(params, "size_min", detail::param_int(params, "clique_size", 4));
            const int c_hi = detail::param_int(params, "size_max", detail::param_int(params, "clique_size", 4));
            if (k_lo < 1 || c_lo < 2 || k_hi < k_lo || c_hi < c_lo)
                throw ConfigError("ring-of-cliques: need cliques >= 1, size >= 2");
            const int k = k_lo + static_cast<int>(rng.index(static_cast<std::size_t>(k_hi - k_lo + 1)));
            const int c = c_lo + static_cast<int>(rng.index(static_cast<std::size_t>(c_hi - c_lo + 1)));
            const int total = k * c;
            for (int q = 0; q < k; ++q)
                for (int a = 0; a < c; ++a)
                    for (int b = a + 1; b < c; ++b) edges.emplace_back(q * c + a, q * c + b);
            for (int q = 0; q < k && k > 1; ++q) edges.emplace_back(q * c, ((q + 1) % k) * c);
            Rng attr_rng(derive_seed(seed, static_cast<std::uint64_t>(idx), 1));
            ds.graphs.push_back(
                detail::finish_graph(total, std::move(edges), node_vocab, edge_vocab, degree_attrs, attr_rng));
            continue;
        } else if (family == "tree") {
            for (int v = 1; v < n; ++v) edges.emplace_back(v, static_cast<int>(rng.index(v)));
        } else if (family == "barabasi" || family == "ba") {
            const int m = std::max(1, detail::param_int(params, "m", 2));
            if (n < m + 1) throw ConfigError("barabasi: need n > m");
            std::vector<int> targets;  // node repeated per degree: preferential pool
            for (int v = 1; v <= m; ++v) {
                edges.emplace_back(v - 1, v);
                targets.push_back(v - 1);
                targets.push_back(v);
            }
            for (int v = m + 1; v < n; ++v) {
                std::set<int> chosen;
                while (static_cast<int>(chosen.size()) < m)
                    chosen.insert(targets[rng.index(targets.size())]);
                for (int u : chosen) {
                    edges.emplace_back(u, v);
                    targets.push_back(u);
                    targets.push_back(v);
                }
            }
        } else if (family == "motif") {
            // labeled corpus: sparse random base + a planted motif on `k` nodes,
            // clique for class 1, cycle (with matched extra edges) for class 0
            const double p = detail::param_real(params, "p", 0.12);
            const int k = std::max(4, detail::param_int(params, "k", 5));
            if (n < k + 1) throw ConfigError("motif: need n > k");
            label = static_cast<int>(rng.index(2));
            for (int u = 0; u < n; ++u)
                for (int v = u + 1; v < n; ++v)
                    if (rng.uniform() < p) edges.emplace_back(u, v);
            auto picked = rng.sample_without_replacement(static_cast<std::size_t>(n),
                                                         static_cast<std::size_t>(k));
            std::vector<int> motif(picked.begin(), picked.end());
            if (label == 1) {
                for (int a = 0; a < k; ++a)
                    for (int b = a + 1; b < k; ++b) edges.emplace_back(motif[a], motif[b]);
            } else {
                for (int a = 0; a < k; ++a) edges.emplace_back(motif[a], motif[(a + 1) % k]);
                // pad with random chords outside the motif so both classes have
                // similar edge counts
                const int extra = k * (k - 1) / 2 - k;
                for (int t = 0; t < extra; ++t)
                    edges.emplace_back(static_cast<int>(rng.index(n)),
                                       static_cast<int>(rng.index(n)));
            }
            std::vector<Edge> cleaned;
            for (const Edge& e : edges)
                if (e.u != e.v) cleaned.push_back(e);
            edges = std::move(cleaned);
        } else {
            throw ConfigError("unknown synthetic family '" + family + "'");
        }

        Rng attr_rng(derive_seed(seed, static_cast<std::uint64_t>(idx), 1));
        ds.graphs.push_back(
            detail::finish_graph(n, std::move(edges), node_vocab, edge_vocab, degree_attrs, attr_rng));
        if (family == "motif") ds.labels.push_back({label});
    }
    if (family == "motif") ds.num_tasks = 1;
    return ds;
}

/// Deterministic shuffled partition. Part sizes are floor(fraction * N) with
/// the remainder assigned to the last part in spec order.
inline std::map<std::string, Dataset> split(const Dataset& ds, const SplitSpec& spec) {
    spec.validate();
    const std::size_t n = ds.size();
    std::vector<std::size_t> sizes;
    std::size_t assigned = 0;
    for (const auto& [name, f] : spec.parts) {
        sizes.push_back(static_cast<std::size_t>(std::floor(f * static_cast<double>(n))));
        assigned += sizes.back();
    }
    sizes.back() += n - assigned;
    for (std::size_t i = 0; i < sizes.size(); ++i)
        if (sizes[i] == 0)
            throw ConfigError("split: part '" + spec.parts[i].first + "' would be empty");

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(spec.seed);
    rng.shuffle(order);

    std::map<std::string, Dataset> out;
    std::size_t cursor = 0;
    for (std::size_t p = 0; p < spec.parts.size(); ++p) {
        Dataset part;
        part.name = ds.name + "/" + spec.parts[p].first;
        part.num_tasks = ds.num_tasks;
        part.node_vocab = ds.node_vocab;
        part.edge_vocab = ds.edge_vocab;
        for (std::size_t i = 0; i < sizes[p]; ++i) {
            const std::size_t src = order[cursor++];
            part.graphs.push_back(ds.graphs[src]);
            if (ds.labeled()) part.labels.push_back(ds.labels[src]);
        }
        out.emplace(spec.parts[p].first, std::move(part));
    }
    return out;
}

/// Empirical categorical distribution over edge-attribute IDs.
inline std::vector<double> fit_edge_attr_distribution(const Dataset& ds) {
    if (ds.graphs.empty()) throw ConfigError("fit_edge_attr_distribution: empty dataset");
    std::vector<double> counts(ds.edge_vocab, 0.0);
    double total = 0.0;
    for (const Graph& g : ds.graphs)
        for (int a : g.edge_attrs()) {
            counts[a] += 1.0;
            total += 1.0;
        }
    if (total == 0.0)
        throw ConfigError("fit_edge_attr_distribution: corpus has no edges (degenerate distribution)");
    for (double& c : counts) c /= total;
    return counts;
}

}  // namespace dsla
