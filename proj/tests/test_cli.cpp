#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "lachesis/synth.hpp"
#include "lachesis/trace_io.hpp"

namespace fs = std::filesystem;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string output;  // stdout + stderr
};

const std::string kCli = LACHESIS_CLI_PATH;

fs::path scratch_dir() {
    static const fs::path dir = [] {
        fs::path p = fs::temp_directory_path() / "lachesis_cli_tests";
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return dir;
}

RunResult run_cli(const std::string& args) {
    const fs::path log = scratch_dir() / "last_output.txt";
    const std::string cmd = kCli + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(log);
    std::ostringstream buf;
    buf << in.rdbuf();
    r.output = buf.str();
    return r;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

// Shared tiny dataset + config files, created once.
struct Fixture {
    fs::path traces;
    fs::path train_config;

    Fixture() {
        const fs::path dir = scratch_dir();
        write_file(dir / "synth_config.json",
                   R"({"n_bugs": 16, "positive_fraction": 0.5, "R": 4, "N": 6,
                       "symbols_per_bug": 5, "convergence": 1.0, "noise": 0.0, "seed": 7})");
        const RunResult synth = run_cli("synth --config " + (dir / "synth_config.json").string() +
                                        " --out " + dir.string());
        REQUIRE(synth.exit_code == 0);
        traces = dir / "traces.json";
        REQUIRE(fs::exists(traces));

        train_config = dir / "train_config.json";
        write_file(train_config,
                   R"({"scheme": "fa", "representation": "graph",
                       "hyperparameters": {"model": "gcn", "layers": 2, "hidden_dim": 8,
                                           "batch": 8, "dropout": 0.2, "epochs": 2,
                                           "learning_rate": 0.001},
                       "folds": 3, "seed": 5, "threshold": 0.5})");
    }
};

Fixture& fixture() {
    static Fixture f;
    return f;
}

}  // namespace

TEST_CASE("usage errors exit with code 2") {
    REQUIRE(run_cli("").exit_code == 2);
    REQUIRE(run_cli("frobnicate").exit_code == 2);
    REQUIRE(run_cli("train").exit_code == 2);  // missing required --traces
    REQUIRE(run_cli("validate --no-such-flag x").exit_code == 2);
}

TEST_CASE("help is available everywhere and lists the flags") {
    const RunResult top = run_cli("--help");
    REQUIRE(top.exit_code == 0);
    for (const char* sub :
         {"validate", "synth", "train", "eval", "predict", "baseline", "gradcheck"}) {
        const RunResult r = run_cli(std::string(sub) + " --help");
        REQUIRE(r.exit_code == 0);
        REQUIRE(r.output.find("--") != std::string::npos);
    }
    REQUIRE(run_cli("train --help").output.find("--jobs") != std::string::npos);
    REQUIRE(run_cli("train --help").output.find("--epoch-selection") != std::string::npos);
    REQUIRE(run_cli("predict --help").output.find("--prefix-steps") != std::string::npos);
}

TEST_CASE("validate accepts generated traces and reports the counts") {
    const RunResult r = run_cli("validate --traces " + fixture().traces.string());
    REQUIRE(r.exit_code == 0);
    REQUIRE(r.output.find("16 bugs OK") != std::string::npos);
}

TEST_CASE("validate names the offending bug on bad data") {
    const fs::path bad = scratch_dir() / "bad_traces.json";
    std::string text = read_file(fixture().traces);
    // Drop one run of the first bug so the run count disagrees with R.
    const auto pos = text.find("\"runs\": [");
    REQUIRE(pos != std::string::npos);
    lachesis::TraceFile file = lachesis::parse_traces(text);
    file.bugs[0].runs.pop_back();
    write_file(bad, lachesis::serialize_traces(file));

    const RunResult r = run_cli("validate --traces " + bad.string());
    REQUIRE(r.exit_code == 1);
    REQUIRE(r.output.find("synth-0") != std::string::npos);
}

TEST_CASE("validate on a missing file is a data error") {
    REQUIRE(run_cli("validate --traces /nonexistent/trace.json").exit_code == 1);
}

TEST_CASE("train writes metrics, roc, and checkpoint artifacts deterministically") {
    const fs::path out1 = scratch_dir() / "train1";
    const fs::path out2 = scratch_dir() / "train2";
    const std::string base = "train --traces " + fixture().traces.string() + " --config " +
                             fixture().train_config.string() + " --out ";
    const RunResult r1 = run_cli(base + out1.string());
    REQUIRE(r1.exit_code == 0);
    REQUIRE(r1.output.find("mean:") != std::string::npos);
    for (const char* name : {"metrics.json", "metrics.csv", "roc.csv", "checkpoint.json"})
        REQUIRE(fs::exists(out1 / name));

    const RunResult r2 = run_cli(base + out2.string());
    REQUIRE(r2.exit_code == 0);
    REQUIRE(read_file(out1 / "metrics.json") == read_file(out2 / "metrics.json"));
    REQUIRE(read_file(out1 / "checkpoint.json") == read_file(out2 / "checkpoint.json"));
}

TEST_CASE("eval scores traces with a trained checkpoint") {
    const fs::path out = scratch_dir() / "train1";
    if (!fs::exists(out / "checkpoint.json")) {
        REQUIRE(run_cli("train --traces " + fixture().traces.string() + " --config " +
                        fixture().train_config.string() + " --out " + out.string())
                    .exit_code == 0);
    }
    const RunResult r = run_cli("eval --checkpoint " + (out / "checkpoint.json").string() +
                                " --traces " + fixture().traces.string() + " --out " +
                                (scratch_dir() / "eval_out").string());
    REQUIRE(r.exit_code == 0);
    REQUIRE(r.output.find("eval:") != std::string::npos);
    REQUIRE(fs::exists(scratch_dir() / "eval_out" / "predictions.csv"));
}

TEST_CASE("predict runs on prefixes and never reads answers") {
    const fs::path out = scratch_dir() / "train1";
    const fs::path ckpt = out / "checkpoint.json";
    REQUIRE(fs::exists(ckpt));

    // A sibling trace file that differs only in its answers.
    lachesis::TraceFile stripped = lachesis::ingest_traces(fixture().traces);
    for (auto& bug : stripped.bugs)
        for (auto& run : bug.runs) run.answer = {"someone.else()"};
    const fs::path stripped_path = scratch_dir() / "stripped.json";
    lachesis::write_traces(stripped, stripped_path);

    const fs::path pred1 = scratch_dir() / "pred1";
    const fs::path pred2 = scratch_dir() / "pred2";
    const RunResult r1 = run_cli("predict --checkpoint " + ckpt.string() + " --traces " +
                                 fixture().traces.string() + " --prefix-steps 3 --out " +
                                 pred1.string());
    REQUIRE(r1.exit_code == 0);
    const RunResult r2 = run_cli("predict --checkpoint " + ckpt.string() + " --traces " +
                                 stripped_path.string() + " --prefix-steps 3 --out " +
                                 pred2.string());
    REQUIRE(r2.exit_code == 0);

    // Scores must be identical: answers are invisible in prefix mode. The
    // label column may differ, so compare bug_id + score + prediction only.
    std::istringstream a(read_file(pred1 / "predictions.csv"));
    std::istringstream b(read_file(pred2 / "predictions.csv"));
    std::string la, lb;
    while (std::getline(a, la) && std::getline(b, lb)) {
        const auto cut = [](const std::string& s) {
            return s.substr(0, s.rfind(','));
        };
        REQUIRE(cut(la) == cut(lb));
    }

    SECTION("prefix beyond N is a config error") {
        REQUIRE(run_cli("predict --checkpoint " + ckpt.string() + " --traces " +
                        fixture().traces.string() + " --prefix-steps 7")
                    .exit_code == 2);
    }
}

TEST_CASE("predict rejects answer-dependent schemes with exit 2") {
    const fs::path out = scratch_dir() / "train_faa";
    std::string cfg_text = read_file(fixture().train_config);
    cfg_text.replace(cfg_text.find("\"fa\""), 4, "\"faa\"");
    const fs::path faa_config = scratch_dir() / "train_config_faa.json";
    write_file(faa_config, cfg_text);
    REQUIRE(run_cli("train --traces " + fixture().traces.string() + " --config " +
                    faa_config.string() + " --out " + out.string())
                .exit_code == 0);
    const RunResult r = run_cli("predict --checkpoint " + (out / "checkpoint.json").string() +
                                " --traces " + fixture().traces.string() + " --prefix-steps 3");
    REQUIRE(r.exit_code == 2);
    REQUIRE(r.output.find("faa") != std::string::npos);
}

TEST_CASE("baseline prints both reference rows") {
    const RunResult r = run_cli("baseline --traces " + fixture().traces.string() +
                                " --threshold 0.5 --out " + (scratch_dir() / "base").string());
    REQUIRE(r.exit_code == 0);
    REQUIRE(r.output.find("confidence") != std::string::npos);
    REQUIRE(r.output.find("all_positive") != std::string::npos);
    REQUIRE(fs::exists(scratch_dir() / "base" / "baseline.csv"));
    REQUIRE(fs::exists(scratch_dir() / "base" / "baseline.json"));
}

TEST_CASE("gradcheck passes for both models") {
    const RunResult r = run_cli("gradcheck --seed 11");
    REQUIRE(r.exit_code == 0);
    REQUIRE(r.output.find("lstm") != std::string::npos);
    REQUIRE(r.output.find("gcn") != std::string::npos);
    REQUIRE(r.output.find("ok") != std::string::npos);
}

TEST_CASE("train selects lstm presets from flags") {
    const fs::path out = scratch_dir() / "train_lstm";
    const RunResult r = run_cli("train --traces " + fixture().traces.string() +
                                " --model lstm --scheme f --seed 3 --out " + out.string());
    REQUIRE(r.exit_code == 0);
    REQUIRE(r.output.find("lstm_f") != std::string::npos);
    REQUIRE(fs::exists(out / "checkpoint.json"));

    const RunResult e = run_cli("eval --checkpoint " + (out / "checkpoint.json").string() +
                                " --traces " + fixture().traces.string());
    REQUIRE(e.exit_code == 0);
}

TEST_CASE("LACHESIS_SEED is the seed fallback") {
    const std::string good = "LACHESIS_SEED=21 " + kCli + " gradcheck > /dev/null 2>&1";
    REQUIRE(WEXITSTATUS(std::system(good.c_str())) == 0);

    const std::string bad = "LACHESIS_SEED=notanumber " + kCli + " train --traces " +
                            fixture().traces.string() + " --model gcn --scheme f > /dev/null 2>&1";
    REQUIRE(WEXITSTATUS(std::system(bad.c_str())) == 2);
}
