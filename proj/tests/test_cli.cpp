#include "cli.hpp"
#include "fedssp/data.hpp"
#include "fedssp/experiment.hpp"
#include "fedssp/manifold.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace fedssp;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("fedssp_cli_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "fedssp");
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path write_config(const fs::path& dir, const std::string& body) {
    const auto p = dir / "exp.toml";
    std::ofstream(p) << body;
    return p;
}

const char* kSmallSynth =
    "source = synth\n"
    "synth_d = 12\n"
    "synth_m = 3\n"
    "synth_n_normal = 400\n"
    "synth_n_anomaly = 100\n"
    "gateways = 4\n"
    "m = 3\n"
    "rounds = 15\n"
    "seed = 5\n";

}  // namespace

TEST_CASE("fit is deterministic and embeds the config") {
    TempDir tmp;
    const auto cfg = write_config(tmp.path, kSmallSynth);
    const auto a = run_cli({"fit", "--config", cfg.string(), "--out_dir", (tmp.path / "a").string()});
    const auto b = run_cli({"fit", "--config", cfg.string(), "--out_dir", (tmp.path / "b").string()});
    REQUIRE(a.code == 0);
    REQUIRE(b.code == 0);
    CHECK(slurp(tmp.path / "a" / "model.fssp") == slurp(tmp.path / "b" / "model.fssp"));
    CHECK(slurp(tmp.path / "a" / "history.jsonl") == slurp(tmp.path / "b" / "history.jsonl"));

    std::ifstream hist(tmp.path / "a" / "history.jsonl");
    std::string first;
    std::getline(hist, first);
    const auto header = nlohmann::json::parse(first);
    CHECK(header["config"]["seed"] == 5);
    CHECK(header["config"]["gateways"] == 4);
    const auto snapshot = nlohmann::json::parse(slurp(tmp.path / "a" / "config.json"));
    CHECK(snapshot["partition_key"] == "f0");
    CHECK(slurp(tmp.path / "a" / "history.csv").rfind("# config: ", 0) == 0);
}

TEST_CASE("fit with zero rounds writes the initializer") {
    TempDir tmp;
    const auto cfg = write_config(tmp.path, kSmallSynth);
    const auto r = run_cli({"fit", "--config", cfg.string(), "--rounds", "0", "--out_dir",
                            tmp.path.string()});
    REQUIRE(r.code == 0);
    const Matrix z = read_matrix(tmp.path / "model.fssp");
    CHECK(z == initial_projection(12, 3, 5));
}

TEST_CASE("fit with one gateway and no sparsity matches PCA") {
    TempDir tmp;
    const auto cfg = write_config(tmp.path, kSmallSynth);
    const auto r = run_cli({"fit", "--config", cfg.string(), "--gateways", "1", "--lambda1", "0",
                            "--lambda2", "0", "--tau1", "1e-6", "--tau2", "1e-6", "--tau3", "1e-6",
                            "--tau4", "1e-6", "--rounds", "60", "--out_dir", tmp.path.string()});
    REQUIRE(r.code == 0);

    ExperimentConfig ec;
    ec.synth.d = 12;
    ec.synth.m = 3;
    ec.synth.n_normal = 400;
    ec.synth.n_anomaly = 100;
    ec.gateways = 1;
    ec.hp.m = 3;
    ec.seed = 5;
    const auto data = prepare_data(ec);
    const Matrix q = ProjectionMatrix::orthonormalize(read_matrix(tmp.path / "model.fssp")).matrix();
    const auto top = oracle::top_eigen(data.train * data.train.transpose(), 3);
    const double err = oracle::reconstruction_error(q, data.train);
    CHECK(std::abs(err - top.tail_sum) <= 1e-4 * top.tail_sum);
}

TEST_CASE("detect on planted data") {
    TempDir tmp;
    const auto cfg = write_config(tmp.path, kSmallSynth);
    REQUIRE(run_cli({"fit", "--config", cfg.string(), "--out_dir", tmp.path.string()}).code == 0);
    const auto model = (tmp.path / "model.fssp").string();

    SUBCASE("strong anomalies are found") {
        const auto r = run_cli({"detect", "--config", cfg.string(), "--model", model, "--out_dir",
                                (tmp.path / "det").string()});
        REQUIRE(r.code == 0);
        const auto report = nlohmann::json::parse(slurp(tmp.path / "det" / "report.json"));
        for (const char* key : {"acc", "pre", "recall", "fnr", "f1", "threshold", "tp", "fp", "tn", "fn"}) {
            CHECK(report.contains(key));
        }
        CHECK(report["f1"].get<double>() >= 95.0);
        CHECK(report["seed"] == 5);
        CHECK(report["config"]["quantile"] == 0.95);
        CHECK(fs::exists(tmp.path / "det" / "scores.csv"));
    }
    SUBCASE("no anomaly signal: recall tracks the false-positive rate") {
        const auto r = run_cli({"detect", "--config", cfg.string(), "--model", model,
                                "--synth_anomaly_scale", "0", "--out_dir", (tmp.path / "ctl").string()});
        REQUIRE(r.code == 0);
        const auto report = nlohmann::json::parse(slurp(tmp.path / "ctl" / "report.json"));
        const double fpr = 100.0 * report["fp"].get<double>() /
                           (report["fp"].get<double>() + report["tn"].get<double>());
        CHECK(std::abs(report["recall"].get<double>() - fpr) <= 5.0);
        CHECK(report["recall"].get<double>() <= 15.0);
    }
    SUBCASE("quantile 1.0 flags no training sample") {
        ExperimentConfig ec;
        ec.synth.d = 12;
        ec.synth.m = 3;
        ec.synth.n_normal = 400;
        ec.synth.n_anomaly = 100;
        ec.gateways = 4;
        ec.hp.m = 3;
        ec.seed = 5;
        const auto data = prepare_data(ec);
        const Matrix z = read_matrix(model);
        const auto train_scores = score(z, data.train);
        const double t = fit_threshold(train_scores, 1.0);
        const auto flagged = classify(train_scores, t);
        CHECK(std::count(flagged.begin(), flagged.end(), true) == 0);
    }
    SUBCASE("missing model is a data error") {
        const auto r = run_cli({"detect", "--config", cfg.string(), "--model",
                                (tmp.path / "nope.fssp").string(), "--out_dir", tmp.path.string()});
        CHECK(r.code == 3);
    }
}

TEST_CASE("sweep") {
    TempDir tmp;
    const auto cfg = write_config(tmp.path, kSmallSynth);

    SUBCASE("singleton grid equals fit plus detect") {
        const auto r = run_cli({"sweep", "--config", cfg.string(), "--p_list", "0.5", "--q_list",
                                "0.5", "--out_dir", (tmp.path / "s").string()});
        REQUIRE(r.code == 0);
        REQUIRE(run_cli({"fit", "--config", cfg.string(), "--out_dir", (tmp.path / "f").string()}).code == 0);
        REQUIRE(run_cli({"detect", "--config", cfg.string(), "--model",
                         (tmp.path / "f" / "model.fssp").string(), "--out_dir",
                         (tmp.path / "f").string()})
                    .code == 0);
        const auto report = nlohmann::json::parse(slurp(tmp.path / "f" / "report.json"));

        std::istringstream csv(slurp(tmp.path / "s" / "sweep.csv"));
        std::string line;
        std::vector<std::string> grid;
        bool baseline = false;
        while (std::getline(csv, line)) {
            if (line.rfind("grid,", 0) == 0) grid.push_back(line);
            if (line.rfind("baseline,", 0) == 0) baseline = true;
        }
        CHECK(baseline);
        REQUIRE(grid.size() == 1);
        // kind,p,q,lambda1,lambda2,acc,pre,recall,fnr,f1,...
        std::vector<std::string> fields;
        std::istringstream row(grid[0]);
        for (std::string f; std::getline(row, f, ',');) fields.push_back(f);
        CHECK(std::stod(fields[9]) == report["f1"].get<double>());
        CHECK(std::stoul(fields[11]) == report["tp"].get<std::size_t>());
    }
    SUBCASE("default grid has nine cells") {
        const auto r = run_cli({"sweep", "--config", cfg.string(), "--rounds", "3", "--out_dir",
                                tmp.path.string()});
        REQUIRE(r.code == 0);
        std::istringstream csv(slurp(tmp.path / "sweep.csv"));
        std::string line;
        int grid = 0;
        while (std::getline(csv, line)) grid += line.rfind("grid,", 0) == 0 ? 1 : 0;
        CHECK(grid == 9);
    }
    SUBCASE("out-of-range exponent is a config error") {
        const auto r = run_cli({"sweep", "--config", cfg.string(), "--p_list", "1.5", "--out_dir",
                                tmp.path.string()});
        CHECK(r.code == 2);
    }
}

TEST_CASE("synth subcommand feeds the csv pipeline") {
    TempDir tmp;
    const auto r = run_cli({"synth", "--synth_d", "10", "--synth_m", "2", "--synth_n_normal", "300",
                            "--synth_n_anomaly", "60", "--seed", "3", "--out_dir", tmp.path.string()});
    REQUIRE(r.code == 0);
    REQUIRE(fs::exists(tmp.path / "train.csv"));
    REQUIRE(fs::exists(tmp.path / "test.csv"));
    CHECK(read_matrix(tmp.path / "true_basis.fssp").cols() == 2);

    const auto cfg = write_config(tmp.path,
                                  "source = csv\n"
                                  "train_csv = \"" + (tmp.path / "train.csv").string() + "\"\n"
                                  "test_csv = \"" + (tmp.path / "test.csv").string() + "\"\n"
                                  "label_column = label\n"
                                  "category_column = category\n"
                                  "partition_key = f3\n"
                                  "gateways = 3\n"
                                  "m = 2\n"
                                  "rounds = 10\n");
    REQUIRE(run_cli({"fit", "--config", cfg.string(), "--out_dir", (tmp.path / "o").string()}).code == 0);
    const auto d = run_cli({"detect", "--config", cfg.string(), "--model",
                            (tmp.path / "o" / "model.fssp").string(), "--out_dir",
                            (tmp.path / "o").string()});
    REQUIRE(d.code == 0);
    const auto report = nlohmann::json::parse(slurp(tmp.path / "o" / "report.json"));
    CHECK(report["tp"].get<int>() + report["fn"].get<int>() == 60);
    CHECK(report["f1"].get<double>() >= 90.0);
    CHECK(slurp(tmp.path / "o" / "scores.csv").find(",anomaly\n") != std::string::npos);
}

TEST_CASE("config handling") {
    TempDir tmp;
    SUBCASE("unknown keys are rejected") {
        const auto cfg = write_config(tmp.path, std::string(kSmallSynth) + "lamda1 = 0.3\n");
        CHECK(run_cli({"fit", "--config", cfg.string(), "--out_dir", tmp.path.string()}).code == 2);
    }
    SUBCASE("range errors") {
        const auto cfg = write_config(tmp.path, kSmallSynth);
        CHECK(run_cli({"fit", "--config", cfg.string(), "--p", "1.0"}).code == 2);
        CHECK(run_cli({"fit", "--config", cfg.string(), "--m", "40"}).code == 2);
        CHECK(run_cli({"fit", "--config", cfg.string(), "--source", "web"}).code == 2);
        CHECK(run_cli({}).code == 2);
    }
    SUBCASE("missing data file") {
        const auto cfg = write_config(tmp.path, "source = csv\ntrain_csv = /nonexistent/x.csv\n");
        CHECK(run_cli({"fit", "--config", cfg.string(), "--out_dir", tmp.path.string()}).code == 3);
    }
    SUBCASE("FEDSSP_SEED overrides the config file but not the flag") {
        const auto cfg = write_config(tmp.path, kSmallSynth);
        ::setenv("FEDSSP_SEED", "77", 1);
        REQUIRE(run_cli({"fit", "--config", cfg.string(), "--rounds", "1", "--out_dir",
                         (tmp.path / "e").string()})
                    .code == 0);
        REQUIRE(run_cli({"fit", "--config", cfg.string(), "--rounds", "1", "--seed", "9",
                         "--out_dir", (tmp.path / "f").string()})
                    .code == 0);
        ::setenv("FEDSSP_SEED", "abc", 1);
        CHECK(run_cli({"fit", "--config", cfg.string(), "--rounds", "1", "--out_dir",
                       (tmp.path / "g").string()})
                  .code == 2);
        ::unsetenv("FEDSSP_SEED");
        CHECK(nlohmann::json::parse(slurp(tmp.path / "e" / "config.json"))["seed"] == 77);
        CHECK(nlohmann::json::parse(slurp(tmp.path / "f" / "config.json"))["seed"] == 9);
    }
    SUBCASE("flags override the config file") {
        const auto cfg = write_config(tmp.path, kSmallSynth);
        REQUIRE(run_cli({"fit", "--config", cfg.string(), "--rounds", "2", "--lambda1", "0.7",
                         "--out_dir", tmp.path.string()})
                    .code == 0);
        const auto snap = nlohmann::json::parse(slurp(tmp.path / "config.json"));
        CHECK(snap["lambda1"] == 0.7);
        CHECK(snap["rounds"] == 2);
    }
}
