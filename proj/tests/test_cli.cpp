#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "test_util.hpp"

#ifndef DSLA_CLI_PATH
#error "DSLA_CLI_PATH must be defined"
#endif

namespace fs = std::filesystem;
using dsla_test::TempDir;
using dsla_test::read_file;

namespace {

struct RunResult {
    int exit_code;
    std::string output;
};

RunResult run_cli(const std::string& args) {
    TempDir cap("cli_out");
    const fs::path out = cap.path() / "stdout.txt";
    const std::string cmd =
        std::string(DSLA_CLI_PATH) + " " + args + " > " + out.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.output = read_file(out);
    return r;
}

const std::string kTinyPretrain =
    "pretrain --data synth:erdos-renyi,n=9,p=0.35,count=16 --epochs 2 --batch-size 8 "
    "--dim 12 --layers 2 --seed 7";

}  // namespace

TEST_CASE("pretrain smoke: exit 0 and expected files") {
    TempDir tmp("cli_pre");
    auto r = run_cli(kTinyPretrain + " --out " + (tmp.path() / "run").string());
    INFO(r.output);
    REQUIRE(r.exit_code == 0);
    CHECK(fs::exists(tmp.path() / "run" / "checkpoint.dsla"));
    CHECK(fs::exists(tmp.path() / "run" / "loss_history.csv"));
    CHECK(fs::exists(tmp.path() / "run" / "config_echo.cfg"));
    CHECK(fs::exists(tmp.path() / "run" / "pretrain_summary.json"));
    // CSV header is pinned
    std::ifstream csv(tmp.path() / "run" / "loss_history.csv");
    std::string header;
    std::getline(csv, header);
    CHECK(header == "step,epoch,loss_total,loss_gd,loss_edit,loss_margin");
}

TEST_CASE("missing --data is a usage error") {
    TempDir tmp("cli_nodata");
    auto r = run_cli("pretrain --out " + (tmp.path() / "x").string());
    CHECK(r.exit_code == 2);
}

TEST_CASE("unknown dataset scheme is a usage error") {
    TempDir tmp("cli_badscheme");
    auto r = run_cli("pretrain --data csv:nope --out " + (tmp.path() / "x").string());
    CHECK(r.exit_code == 2);
}

TEST_CASE("rerunning the same command reproduces outputs byte-identically") {
    TempDir tmp("cli_det");
    auto r1 = run_cli(kTinyPretrain + " --out " + (tmp.path() / "a").string());
    auto r2 = run_cli(kTinyPretrain + " --out " + (tmp.path() / "b").string());
    REQUIRE(r1.exit_code == 0);
    REQUIRE(r2.exit_code == 0);
    CHECK(read_file(tmp.path() / "a" / "loss_history.csv") ==
          read_file(tmp.path() / "b" / "loss_history.csv"));
    CHECK(read_file(tmp.path() / "a" / "checkpoint.dsla") ==
          read_file(tmp.path() / "b" / "checkpoint.dsla"));
}

TEST_CASE("config echo reproduces the run") {
    TempDir tmp("cli_echo");
    auto r1 = run_cli(kTinyPretrain + " --out " + (tmp.path() / "a").string());
    REQUIRE(r1.exit_code == 0);
    auto r2 = run_cli("pretrain --config " + (tmp.path() / "a" / "config_echo.cfg").string() +
                      " --out " + (tmp.path() / "b").string());
    INFO(r2.output);
    REQUIRE(r2.exit_code == 0);
    CHECK(read_file(tmp.path() / "a" / "checkpoint.dsla") ==
          read_file(tmp.path() / "b" / "checkpoint.dsla"));
}

TEST_CASE("unknown config keys are rejected") {
    TempDir tmp("cli_badkey");
    std::ofstream cfg(tmp.path() / "bad.cfg");
    cfg << "pretrain.data=\"synth:erdos-renyi,n=9,p=0.3,count=8\"\npretrain.no-such-key=1\n";
    cfg.close();
    auto r = run_cli("pretrain --config " + (tmp.path() / "bad.cfg").string() + " --out " +
                     (tmp.path() / "x").string());
    CHECK(r.exit_code == 2);
}

TEST_CASE("help lists flags with defaults for every subcommand") {
    for (const std::string sub :
         {"pretrain", "finetune", "linkpred", "rankcorr", "ablate", "export-embeddings"}) {
        auto r = run_cli(sub + " --help");
        INFO(sub);
        REQUIRE(r.exit_code == 0);
        CHECK(r.output.find("--seed") != std::string::npos);
        CHECK(r.output.find("--out") != std::string::npos);
    }
    auto r = run_cli("pretrain --help");
    CHECK(r.output.find("--epochs") != std::string::npos);
    CHECK(r.output.find("100") != std::string::npos);       // default echoed
    CHECK(r.output.find("--lambda1") != std::string::npos);
    CHECK(r.output.find("0.7") != std::string::npos);
}

TEST_CASE("incompatible checkpoint reports a manifest diff and exits 2") {
    TempDir tmp("cli_ckpt");
    auto r1 = run_cli(kTinyPretrain + " --out " + (tmp.path() / "a").string());
    REQUIRE(r1.exit_code == 0);
    auto r2 = run_cli(
        "finetune --data synth:motif,n=10,p=0.12,k=4,count=20 --split 2:1:1 --seeds 1 "
        "--finetune-epochs 1 --dim 24 --layers 2 --pretrained " +
        (tmp.path() / "a" / "checkpoint.dsla").string() + " --out " + (tmp.path() / "b").string());
    CHECK(r2.exit_code == 2);
    CHECK(r2.output.find("dim") != std::string::npos);
    CHECK(r2.output.find("12") != std::string::npos);
    CHECK(r2.output.find("24") != std::string::npos);
}

TEST_CASE("rankcorr in random-init mode writes the per-graph CSV") {
    TempDir tmp("cli_rank");
    auto r = run_cli(
        "rankcorr --data synth:erdos-renyi,n=14,p=0.4,count=12 --model random-init "
        "--num-graphs 6 --dim 12 --layers 2 --out " +
        (tmp.path() / "rc").string());
    INFO(r.output);
    REQUIRE(r.exit_code == 0);
    const std::string csv = read_file(tmp.path() / "rc" / "rank_correlation.csv");
    CHECK(csv.rfind("graph_id,coefficient,num_ladder_points\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);  // header + 6 rows
}

TEST_CASE("ablate writes a Table-5-shaped CSV") {
    TempDir tmp("cli_abl");
    auto r = run_cli(
        "ablate --grid losses --data synth:motif,n=10,p=0.12,k=4,count=20 --split 5:1:1:3 "
        "--seeds 1 --epochs 1 --finetune-epochs 1 --dim 8 --layers 1 --batch-size 6 --out " +
        (tmp.path() / "abl").string());
    INFO(r.output);
    REQUIRE(r.exit_code == 0);
    const std::string csv = read_file(tmp.path() / "abl" / "ablation.csv");
    CHECK(csv.rfind("name,gd,edit,margin,mean,std,per_seed,error\n", 0) == 0);
    for (const char* row : {"none", "gd", "edit", "gd+edit", "gd+edit+margin"})
        CHECK(csv.find(row) != std::string::npos);
}

TEST_CASE("export-embeddings writes roles and 2D coordinates") {
    TempDir tmp("cli_exp");
    auto r = run_cli(
        "export-embeddings --data synth:erdos-renyi,n=14,p=0.4,count=20 --model random-init "
        "--num-negatives 5 --dim 12 --layers 2 --out " +
        (tmp.path() / "exp").string());
    INFO(r.output);
    REQUIRE(r.exit_code == 0);
    const std::string csv = read_file(tmp.path() / "exp" / "embeddings_2d.csv");
    CHECK(csv.rfind("graph_id,role,x,y\n", 0) == 0);
    CHECK(csv.find("anchor") != std::string::npos);
    CHECK(csv.find("perturbed:") != std::string::npos);
    CHECK(csv.find("negative") != std::string::npos);
}
