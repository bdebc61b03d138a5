// dsla: discrepancy-based self-supervised learning for graphs.
// Subcommands: pretrain, finetune, linkpred, rankcorr, ablate,
// export-embeddings. Exit codes: 0 success, 1 runtime failure, 2 usage or
// configuration error.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dsla/dataset.hpp"
#include "dsla/logging.hpp"
#include "dsla/metrics.hpp"
#include "dsla/trainer.hpp"

namespace fs = std::filesystem;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// dataset URIs: tu:<name>@<dir> | jsonl:<path> | synth:<family>,<k=v>,...

dsla::Dataset load_dataset(const std::string& uri, int max_degree_vocab) {
    if (uri.rfind("tu:", 0) == 0) {
        std::string rest = uri.substr(3);
        std::string name = rest, dir = ".";
        if (auto at = rest.find('@'); at != std::string::npos) {
            name = rest.substr(0, at);
            dir = rest.substr(at + 1);
        }
        static const std::map<std::string, std::string> aliases{{"IMDB-B", "IMDB-BINARY"},
                                                                {"IMDB-M", "IMDB-MULTI"}};
        std::vector<std::string> candidates{name};
        if (auto it = aliases.find(name); it != aliases.end()) candidates.push_back(it->second);
        for (const std::string& c : candidates) {
            const fs::path nested = fs::path(dir) / c;
            if (fs::exists(nested / (c + "_A.txt")))
                return dsla::load_tu_dataset(nested.string(), c, max_degree_vocab);
            if (fs::exists(fs::path(dir) / (c + "_A.txt")))
                return dsla::load_tu_dataset(dir, c, max_degree_vocab);
        }
        throw dsla::LoadError("TU dataset '" + name + "' not found under " + dir);
    }
    if (uri.rfind("jsonl:", 0) == 0) return dsla::load_jsonl(uri.substr(6));
    if (uri.rfind("synth:", 0) == 0) {
        std::string rest = uri.substr(6);
        std::string family;
        std::map<std::string, double> params;
        int count = 200;
        std::uint64_t seed = 0x5eed;
        std::stringstream ss(rest);
        std::string token;
        bool first = true;
        while (std::getline(ss, token, ',')) {
            if (first) {
                family = token;
                first = false;
                continue;
            }
            auto eq = token.find('=');
            if (eq == std::string::npos)
                throw dsla::ConfigError("synth URI expects k=v pairs, got '" + token + "'");
            const std::string key = token.substr(0, eq);
            const double value = std::stod(token.substr(eq + 1));
            if (key == "count")
                count = static_cast<int>(value);
            else if (key == "seed")
                seed = static_cast<std::uint64_t>(value);
            else
                params[key] = value;
        }
        if (family.empty()) throw dsla::ConfigError("synth URI needs a family");
        return dsla::generate_synthetic(family, params, count, seed);
    }
    throw dsla::ConfigError("unknown dataset URI scheme: " + uri +
                            " (expected tu:, jsonl:, or synth:)");
}

// ---------------------------------------------------------------------------
// shared option bundle

struct CommonOpts {
    std::string data_uri;
    std::string out_dir;
    std::uint64_t seed = 0;
    int workers = 1;
    int epochs = 100;
    int finetune_epochs = 100;
    int batch_size = 32;
    double lr = 1e-3;
    double lambda1 = 0.7;
    double lambda2 = 0.5;
    double margin_alpha = 5.0;
    double temperature = 0.1;
    std::string arch = "gin";
    int layers = 5;
    int dim = 64;
    std::string ratios = "0.2,0.4,0.6";
    double mask_ratio = 0.8;
    int hop_k = 3;
    bool strong = false;
    bool whole_graph = false;
    bool no_margin = false;
    bool no_edit = false;
    bool no_gd = false;
    bool strong_out_of_edit = false;
    bool freeze_encoder = false;
    std::string objective = "dsla";
    std::string pretrained;
    std::string split = "5:1:1:3";
    std::uint64_t split_seed = 1;
    int num_seeds = 5;
    int link_holdout = 10;
    int max_degree_vocab = 64;
};

void add_common_options(CLI::App* cmd, CommonOpts& o, bool needs_data = true) {
    auto* data = cmd->add_option("--data", o.data_uri,
                                 "dataset URI: tu:<name>@<dir> | jsonl:<path> | synth:<family>,<k=v>,...");
    if (needs_data) data->required();
    cmd->add_option("--out", o.out_dir, "output directory");
    cmd->add_option("--seed", o.seed, "base RNG seed")->capture_default_str();
    cmd->add_option("--workers", o.workers, "parallel batch-preparation workers (1 = determinism reference)")
        ->capture_default_str();
    cmd->add_option("--epochs", o.epochs, "pretraining epochs")->capture_default_str();
    cmd->add_option("--finetune-epochs", o.finetune_epochs, "fine-tuning epochs")->capture_default_str();
    cmd->add_option("--batch-size", o.batch_size, "graphs per optimizer step")->capture_default_str();
    cmd->add_option("--lr", o.lr, "Adam learning rate")->capture_default_str();
    cmd->add_option("--lambda1", o.lambda1, "edit-loss weight")->capture_default_str();
    cmd->add_option("--lambda2", o.lambda2, "margin-loss weight")->capture_default_str();
    cmd->add_option("--margin-alpha", o.margin_alpha, "triplet margin")->capture_default_str();
    cmd->add_option("--temperature", o.temperature, "contrastive similarity temperature")
        ->capture_default_str();
    cmd->add_option("--arch", o.arch, "encoder architecture: gin | gcn")->capture_default_str();
    cmd->add_option("--layers", o.layers, "encoder layers")->capture_default_str();
    cmd->add_option("--dim", o.dim, "embedding width")->capture_default_str();
    cmd->add_option("--ratios", o.ratios, "comma-separated edge-perturbation ratios")
        ->capture_default_str();
    cmd->add_option("--mask-ratio", o.mask_ratio, "node-mask ratio within the perturbation pool")
        ->capture_default_str();
    cmd->add_option("--hop-k", o.hop_k, "subgraph hop radius")->capture_default_str();
    cmd->add_flag("--strong", o.strong, "add the strong 80%/80% whole-graph perturbation");
    cmd->add_flag("--whole-graph", o.whole_graph,
                  "perturb over the whole graph instead of a sampled subgraph");
    cmd->add_flag("--no-margin", o.no_margin, "disable the margin loss");
    cmd->add_flag("--no-edit", o.no_edit, "disable the edit-distance loss");
    cmd->add_flag("--no-gd", o.no_gd, "disable the graph-discrimination loss");
    cmd->add_flag("--strong-out-of-edit", o.strong_out_of_edit,
                  "exclude the strong perturbation from the edit loss");
    cmd->add_flag("--freeze-encoder", o.freeze_encoder, "linear probing: train only the task head");
    cmd->add_option("--objective", o.objective, "pretraining objective: dsla | contrastive | attrmask | edgepred")
        ->capture_default_str();
    cmd->add_option("--pretrained", o.pretrained, "checkpoint to start from (absent = no pretraining)");
    cmd->add_option("--split", o.split, "split ratio, e.g. 5:1:1:3")->capture_default_str();
    cmd->add_option("--split-seed", o.split_seed, "seed for the dataset split")->capture_default_str();
    cmd->add_option("--seeds", o.num_seeds, "number of fine-tuning seeds")->capture_default_str();
    cmd->add_option("--link-holdout", o.link_holdout, "held-out edges per graph for link prediction")
        ->capture_default_str();
    cmd->add_option("--max-degree-vocab", o.max_degree_vocab,
                    "degree-attribute clip for datasets without node labels")
        ->capture_default_str();
    cmd->configurable(true);
}

std::vector<double> parse_ratio_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string token;
    while (std::getline(ss, token, ',')) out.push_back(std::stod(token));
    if (out.empty()) throw dsla::ConfigError("--ratios: empty list");
    return out;
}

dsla::TrainConfig build_train_config(const CommonOpts& o, const dsla::Dataset& ds) {
    dsla::TrainConfig cfg;
    cfg.epochs = o.epochs;
    cfg.finetune_epochs = o.finetune_epochs;
    cfg.batch_size = o.batch_size;
    cfg.lr = o.lr;
    cfg.seed = o.seed;
    cfg.workers = o.workers;
    cfg.freeze_encoder = o.freeze_encoder;
    cfg.link_holdout = o.link_holdout;
    cfg.objective = dsla::objective_from_name(o.objective);
    cfg.loss.lambda1 = o.lambda1;
    cfg.loss.lambda2 = o.lambda2;
    cfg.loss.margin_alpha = o.margin_alpha;
    cfg.loss.temperature = o.temperature;
    cfg.loss.use_gd = !o.no_gd;
    cfg.loss.use_edit = !o.no_edit;
    cfg.loss.use_margin = !o.no_margin;
    cfg.perturb.ratios = parse_ratio_list(o.ratios);
    cfg.perturb.node_mask_ratio = o.mask_ratio;
    cfg.perturb.hop_k = o.hop_k;
    cfg.perturb.strong = o.strong;
    cfg.perturb.whole_graph = o.whole_graph;
    cfg.perturb.strong_in_edit = !o.strong_out_of_edit;
    cfg.encoder.arch = dsla::arch_from_name(o.arch);
    cfg.encoder.num_layers = o.layers;
    cfg.encoder.dim = o.dim;
    cfg.encoder.node_vocab = ds.node_vocab;
    cfg.encoder.edge_vocab = ds.edge_vocab;
    cfg.out_dir = o.out_dir;
    return cfg;
}

std::vector<std::uint64_t> seed_list(const CommonOpts& o) {
    std::vector<std::uint64_t> seeds;
    for (int i = 0; i < o.num_seeds; ++i) seeds.push_back(o.seed + static_cast<std::uint64_t>(i));
    return seeds;
}

void ensure_out_dir(const std::string& dir) {
    if (dir.empty()) throw dsla::ConfigError("--out is required for this subcommand");
    fs::create_directories(dir);
}

void echo_config(CLI::App* cmd, const std::string& out_dir) {
    // flat dotted keys (<subcommand>.<option>=value); the echo is itself a
    // valid --config file, so re-running the subcommand from it reproduces
    // the run
    std::ofstream out(fs::path(out_dir) / "config_echo.cfg");
    std::istringstream lines(cmd->config_to_str(true, false));
    std::string line;
    while (std::getline(lines, line)) {
        if (line.empty() || line[0] == '#' || line[0] == '[') continue;
        out << cmd->get_name() << "." << line << "\n";
    }
}

void write_json(const nlohmann::json& j, const fs::path& path) {
    std::ofstream out(path);
    out << j.dump(2) << "\n";
}

std::optional<dsla::Checkpoint> load_pretrained(const CommonOpts& o, const dsla::TrainConfig& cfg) {
    if (o.pretrained.empty()) return std::nullopt;
    dsla::Checkpoint ck = dsla::Checkpoint::load(o.pretrained);
    const std::string diff = dsla::checkpoint_mismatch(ck.cfg, cfg.encoder);
    if (!diff.empty())
        throw dsla::ConfigError("checkpoint incompatible with requested configuration:\n" + diff);
    return ck;
}

// embeds a graph with fixed (constant) parameters
std::function<std::vector<double>(const dsla::Graph&)> make_embedder(
    const std::map<std::string, dsla::Tensor>& params, const dsla::EncoderConfig& cfg) {
    return [&params, cfg](const dsla::Graph& g) {
        dsla::Tensor h = dsla::embed_graph(g, params, cfg);
        return std::vector<double>(h.data->begin(), h.data->end());
    };
}

// ---------------------------------------------------------------------------
// subcommand bodies

int cmd_pretrain(CLI::App* cmd, const CommonOpts& o) {
    dsla::Dataset ds = load_dataset(o.data_uri, o.max_degree_vocab);
    dsla::TrainConfig cfg = build_train_config(o, ds);
    ensure_out_dir(o.out_dir);
    echo_config(cmd, o.out_dir);
    dsla::PretrainResult result = dsla::pretrain(ds, cfg);
    nlohmann::json summary{{"graphs", ds.size()},
                           {"steps", result.history.size()},
                           {"processed_graphs", result.processed_graphs},
                           {"skipped_graphs", result.skipped_graphs},
                           {"final_loss", result.history.empty() ? 0.0 : result.history.back().total},
                           {"checkpoint", (fs::path(o.out_dir) / "checkpoint.dsla").string()}};
    write_json(summary, fs::path(o.out_dir) / "pretrain_summary.json");
    std::cout << summary.dump(2) << "\n";
    return 0;
}

int cmd_finetune(CLI::App* cmd, const CommonOpts& o) {
    dsla::Dataset ds = load_dataset(o.data_uri, o.max_degree_vocab);
    if (!ds.labeled()) throw dsla::ConfigError("finetune requires a labeled dataset");
    dsla::TrainConfig cfg = build_train_config(o, ds);
    ensure_out_dir(o.out_dir);
    echo_config(cmd, o.out_dir);
    auto splits = dsla::split(ds, dsla::SplitSpec::parse_ratio(o.split, o.split_seed));
    if (!splits.count("train") || !splits.count("valid") || !splits.count("test"))
        throw dsla::ConfigError("finetune needs a split with train/valid/test parts");
    std::optional<dsla::Checkpoint> ckpt = load_pretrained(o, cfg);
    dsla::MetricsReport report =
        dsla::finetune_classify(ckpt ? &*ckpt : nullptr, splits, cfg, seed_list(o));
    write_json(report.to_json(), fs::path(o.out_dir) / "metrics.json");
    std::cout << report.to_json().dump(2) << "\n";
    return 0;
}

int cmd_linkpred(CLI::App* cmd, const CommonOpts& o) {
    dsla::Dataset ds = load_dataset(o.data_uri, o.max_degree_vocab);
    dsla::TrainConfig cfg = build_train_config(o, ds);
    ensure_out_dir(o.out_dir);
    echo_config(cmd, o.out_dir);
    auto splits = dsla::split(ds, dsla::SplitSpec::parse_ratio(o.split, o.split_seed));
    if (!splits.count("train") || !splits.count("valid") || !splits.count("test"))
        throw dsla::ConfigError("linkpred needs a split with train/valid/test parts");
    std::optional<dsla::Checkpoint> ckpt = load_pretrained(o, cfg);
    dsla::MetricsReport report =
        dsla::finetune_link(ckpt ? &*ckpt : nullptr, splits, cfg, seed_list(o));
    write_json(report.to_json(), fs::path(o.out_dir) / "metrics.json");
    std::cout << report.to_json().dump(2) << "\n";
    return 0;
}

int cmd_rankcorr(CLI::App* cmd, const CommonOpts& o, const std::string& model, int num_graphs) {
    dsla::Dataset ds = load_dataset(o.data_uri, o.max_degree_vocab);
    dsla::TrainConfig cfg = build_train_config(o, ds);
    ensure_out_dir(o.out_dir);
    echo_config(cmd, o.out_dir);

    std::map<std::string, dsla::Tensor> params;
    dsla::EncoderConfig enc_cfg = cfg.encoder;
    if (model == "random-init") {
        dsla::Rng rng(dsla::derive_seed(o.seed, 0x3141ULL));
        params = dsla::init_encoder_params(enc_cfg, rng).tensors;
    } else {
        dsla::Checkpoint ck = dsla::Checkpoint::load(model);
        const std::string diff = dsla::checkpoint_mismatch(ck.cfg, enc_cfg);
        if (!diff.empty())
            throw dsla::ConfigError("checkpoint incompatible with requested configuration:\n" + diff);
        params = std::move(ck.params);
        enc_cfg = ck.cfg;
    }

    std::vector<double> edge_dist;
    try {
        edge_dist = dsla::fit_edge_attr_distribution(ds);
    } catch (const dsla::ConfigError&) {
    }
    auto report = dsla::rank_correlation_analysis(make_embedder(params, enc_cfg), ds.graphs,
                                                  static_cast<std::size_t>(num_graphs), o.seed,
                                                  edge_dist);
    std::ofstream csv(fs::path(o.out_dir) / "rank_correlation.csv");
    csv << "graph_id,coefficient,num_ladder_points\n";
    for (const auto& row : report.rows)
        csv << row.graph_id << "," << dsla::format_double(row.coefficient) << ","
            << row.num_ladder_points << "\n";
    nlohmann::json summary{{"mean_coefficient", report.mean},
                           {"graphs_used", report.rows.size()},
                           {"skipped", report.skipped},
                           {"model", model}};
    write_json(summary, fs::path(o.out_dir) / "rankcorr_summary.json");
    std::cout << summary.dump(2) << "\n";
    return 0;
}

int cmd_ablate(CLI::App* cmd, const CommonOpts& o, const std::string& grid_name) {
    if (grid_name != "losses") throw dsla::ConfigError("unknown --grid '" + grid_name + "'");
    dsla::Dataset ds = load_dataset(o.data_uri, o.max_degree_vocab);
    if (!ds.labeled()) throw dsla::ConfigError("ablate requires a labeled dataset");
    dsla::TrainConfig cfg = build_train_config(o, ds);
    ensure_out_dir(o.out_dir);
    echo_config(cmd, o.out_dir);
    auto splits = dsla::split(ds, dsla::SplitSpec::parse_ratio(o.split, o.split_seed));
    auto rows = dsla::ablate(splits, cfg, dsla::default_loss_grid(), seed_list(o));
    dsla::write_ablation_csv(rows, (fs::path(o.out_dir) / "ablation.csv").string());
    nlohmann::json summary = nlohmann::json::array();
    for (const auto& row : rows)
        summary.push_back({{"name", row.cell.name},
                           {"failed", row.failed},
                           {"mean", row.failed ? nlohmann::json() : nlohmann::json(row.report.mean)}});
    std::cout << summary.dump(2) << "\n";
    return 0;
}

int cmd_export_embeddings(CLI::App* cmd, const CommonOpts& o, const std::string& model,
                          int graph_index, int num_negatives) {
    dsla::Dataset ds = load_dataset(o.data_uri, o.max_degree_vocab);
    dsla::TrainConfig cfg = build_train_config(o, ds);
    ensure_out_dir(o.out_dir);
    echo_config(cmd, o.out_dir);
    if (graph_index < 0 || static_cast<std::size_t>(graph_index) >= ds.size())
        throw dsla::ConfigError("--graph-index out of range");

    std::map<std::string, dsla::Tensor> params;
    dsla::EncoderConfig enc_cfg = cfg.encoder;
    if (model == "random-init") {
        dsla::Rng rng(dsla::derive_seed(o.seed, 0x3141ULL));
        params = dsla::init_encoder_params(enc_cfg, rng).tensors;
    } else {
        dsla::Checkpoint ck = dsla::Checkpoint::load(model);
        params = std::move(ck.params);
        enc_cfg = ck.cfg;
    }
    auto embed = make_embedder(params, enc_cfg);

    std::vector<double> edge_dist;
    try {
        edge_dist = dsla::fit_edge_attr_distribution(ds);
    } catch (const dsla::ConfigError&) {
    }

    dsla::Rng rng(dsla::derive_seed(o.seed, 0xe4beULL));
    const dsla::Graph& anchor = ds.graphs[graph_index];
    dsla::RankLadder ladder =
        dsla::build_rank_ladder(anchor, dsla::ladder_magnitudes(), edge_dist, rng);

    std::vector<std::vector<double>> rows;
    std::vector<std::string> roles;
    std::vector<std::size_t> graph_ids;
    rows.push_back(embed(anchor));
    roles.push_back("anchor");
    graph_ids.push_back(static_cast<std::size_t>(graph_index));
    for (const auto& rec : ladder.rungs) {
        rows.push_back(embed(rec.graph));
        roles.push_back("perturbed:" + std::to_string(rec.edit_distance));
        graph_ids.push_back(static_cast<std::size_t>(graph_index));
    }
    int taken = 0;
    for (std::size_t i = 0; i < ds.size() && taken < num_negatives; ++i) {
        if (static_cast<int>(i) == graph_index) continue;
        rows.push_back(embed(ds.graphs[i]));
        roles.push_back("negative");
        graph_ids.push_back(i);
        ++taken;
    }

    auto pca = dsla::pca_project(rows, 2);
    std::ofstream csv(fs::path(o.out_dir) / "embeddings_2d.csv");
    csv << "graph_id,role,x,y\n";
    for (std::size_t i = 0; i < rows.size(); ++i)
        csv << graph_ids[i] << "," << roles[i] << "," << dsla::format_double(pca.coords[i][0]) << ","
            << dsla::format_double(pca.coords[i][1]) << "\n";
    nlohmann::json summary{{"points", rows.size()},
                           {"explained_ratio", pca.explained_ratio},
                           {"model", model}};
    write_json(summary, fs::path(o.out_dir) / "export_summary.json");
    std::cout << summary.dump(2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Discrepancy-based self-supervised learning for graph neural networks"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_config("--config", "",
                   "flat key=value config file (dotted keys, e.g. pretrain.data=...); flags override");
    app.allow_config_extras(CLI::config_extras_mode::error);

    CommonOpts opt_pre, opt_ft, opt_link, opt_rank, opt_abl, opt_exp;
    std::string rank_model = "random-init";
    std::string export_model = "random-init";
    std::string grid_name = "losses";
    int graph_index = 0;
    int num_negatives = 30;

    CLI::App* pre = app.add_subcommand("pretrain", "self-supervised pretraining");
    add_common_options(pre, opt_pre);

    CLI::App* ft = app.add_subcommand("finetune", "graph-classification fine-tuning + ROC-AUC report");
    add_common_options(ft, opt_ft);

    CLI::App* link = app.add_subcommand("linkpred", "link-prediction fine-tuning + AP report");
    add_common_options(link, opt_link);

    CLI::App* rank = app.add_subcommand("rankcorr", "edit-distance rank-correlation analysis");
    add_common_options(rank, opt_rank);
    rank->add_option("--model", rank_model, "checkpoint path or 'random-init'")->capture_default_str();
    int num_graphs = 200;
    rank->add_option("--num-graphs", num_graphs, "ladder graphs to sample (up to 1000)")
        ->capture_default_str();

    CLI::App* abl = app.add_subcommand("ablate", "loss-term ablation grid");
    add_common_options(abl, opt_abl);
    abl->add_option("--grid", grid_name, "ablation grid name (losses)")->capture_default_str();

    CLI::App* exp = app.add_subcommand("export-embeddings", "2D PCA export of anchor/perturbed/negative embeddings");
    add_common_options(exp, opt_exp);
    exp->add_option("--model", export_model, "checkpoint path or 'random-init'")->capture_default_str();
    exp->add_option("--graph-index", graph_index, "anchor graph index")->capture_default_str();
    exp->add_option("--num-negatives", num_negatives, "negative graphs to include")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (pre->parsed()) return cmd_pretrain(pre, opt_pre);
        if (ft->parsed()) return cmd_finetune(ft, opt_ft);
        if (link->parsed()) return cmd_linkpred(link, opt_link);
        if (rank->parsed()) return cmd_rankcorr(rank, opt_rank, rank_model, num_graphs);
        if (abl->parsed()) return cmd_ablate(abl, opt_abl, grid_name);
        if (exp->parsed()) return cmd_export_embeddings(exp, opt_exp, export_model, graph_index,
                                                        num_negatives);
        std::cerr << "no subcommand given\n";
        return 2;
    } catch (const dsla::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const dsla::ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return 2;
    } catch (const dsla::LoadError& e) {
        std::cerr << "load error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
