// lachesis: converts sets of LLM-agent reasoning traces into matrix/graph
// representations, trains sequence and graph-convolution classifiers to
// predict whether self-consistency voting found the right answer, and
// compares against the voting-confidence baseline.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lachesis/embedding.hpp"
#include "lachesis/errors.hpp"
#include "lachesis/experiment.hpp"
#include "lachesis/nn/checkpoint.hpp"
#include "lachesis/nn/gradcheck.hpp"
#include "lachesis/synth.hpp"
#include "lachesis/trace_io.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitDataError = 1;
constexpr int kExitConfigError = 2;
constexpr int kExitNumericError = 3;

std::uint64_t seed_from_env_or_default() {
    if (const char* env = std::getenv("LACHESIS_SEED")) {
        char* end = nullptr;
        const unsigned long long v = std::strtoull(env, &end, 10);
        if (end == env || *end != '\0')
            throw lachesis::ConfigError("LACHESIS_SEED is not an integer: '" +
                                        std::string(env) + "'");
        return static_cast<std::uint64_t>(v);
    }
    return 1;
}

json read_json_file(const fs::path& path, const char* what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw lachesis::ConfigError(std::string("cannot open ") + what + ": " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw lachesis::ConfigError(std::string(what) + " is not valid JSON: " + e.what());
    }
    return j;
}

void write_text_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw lachesis::ConfigError("cannot write " + path.string());
    out << text;
}

std::string fmt(double v) {
    if (std::isnan(v)) return "-";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

struct TrainFlags {
    std::string traces;
    std::string config_path;
    std::string out_dir = "out";
    std::optional<std::string> model;
    std::optional<std::string> scheme;
    std::optional<std::string> epoch_selection;
    std::optional<double> threshold;
    std::optional<std::uint64_t> seed;
    std::optional<int> jobs;
    bool stratified = false;
};

lachesis::ExperimentConfig resolve_experiment_config(const TrainFlags& flags) {
    lachesis::ExperimentConfig cfg;
    bool config_had_seed = false;
    if (!flags.config_path.empty()) {
        const json j = read_json_file(flags.config_path, "config file");
        cfg = lachesis::config_from_json(j);
        config_had_seed = j.contains("seed");
    } else {
        cfg.scheme = lachesis::Scheme::function_arg;
        cfg.hyper = lachesis::preset(lachesis::ModelKind::gcn, cfg.scheme);
        cfg.representation = lachesis::default_representation(cfg.hyper.model);
    }
    // --model/--scheme reselect the tuned preset; per-field control lives in
    // the config file.
    if (flags.model || flags.scheme) {
        const lachesis::Scheme scheme =
            flags.scheme ? lachesis::scheme_from_string(*flags.scheme) : cfg.scheme;
        const lachesis::ModelKind model =
            flags.model ? lachesis::model_from_string(*flags.model) : cfg.hyper.model;
        cfg.scheme = scheme;
        cfg.hyper = lachesis::preset(model, scheme);
        cfg.representation = lachesis::default_representation(model);
    }
    if (flags.epoch_selection) {
        if (*flags.epoch_selection == "paper")
            cfg.epoch_selection = lachesis::EpochSelection::peak_test;
        else if (*flags.epoch_selection == "final")
            cfg.epoch_selection = lachesis::EpochSelection::final_epoch;
        else
            throw lachesis::ConfigError("--epoch-selection expects 'paper' or 'final'");
    }
    if (flags.threshold) cfg.threshold = *flags.threshold;
    if (flags.jobs) cfg.jobs = *flags.jobs;
    if (flags.stratified) cfg.stratified = true;
    if (flags.seed)
        cfg.seed = *flags.seed;
    else if (!config_had_seed)
        cfg.seed = seed_from_env_or_default();
    lachesis::validate_config(cfg);
    return cfg;
}

std::string method_tag(const lachesis::ExperimentConfig& cfg) {
    return std::string(lachesis::to_string(cfg.hyper.model)) + "_" +
           std::string(lachesis::to_string(cfg.scheme));
}

// Trains one model on the whole dataset (no held-out fold) for the
// checkpoint that `eval` and `predict` consume.
lachesis::nn::ParameterSet train_final_model(const lachesis::ExperimentConfig& cfg,
                                             const lachesis::PreparedDataset& data) {
    lachesis::SplitMix64 base = lachesis::SplitMix64(cfg.seed).split("final");
    lachesis::ModelAdapter model(data, cfg.hyper, base.split("init"));
    lachesis::SplitMix64 train_rng = base.split("train");
    std::vector<int> usable;
    for (std::size_t i = 0; i < data.bugs.size(); ++i)
        if (model.trainable(static_cast<int>(i))) usable.push_back(static_cast<int>(i));
    const lachesis::nn::AdamConfig adam{.learning_rate = cfg.hyper.learning_rate};
    std::int64_t step = 0;
    for (int epoch = 0; epoch < cfg.hyper.epochs; ++epoch) {
        train_rng.shuffle(usable);
        for (std::size_t start = 0; start < usable.size();
             start += static_cast<std::size_t>(cfg.hyper.batch)) {
            const std::size_t end =
                std::min(usable.size(), start + static_cast<std::size_t>(cfg.hyper.batch));
            const double inv_batch = 1.0 / static_cast<double>(end - start);
            model.params().zero_grads();
            for (std::size_t i = start; i < end; ++i) {
                const int idx = usable[i];
                const bool target = data.bugs[idx].correct != 0;
                const double logit = model.forward(idx, true, &train_rng);
                model.backward(lachesis::nn::bce_dlogit(logit, target) * inv_batch);
            }
            lachesis::nn::adam_step(model.params(), adam, ++step);
        }
    }
    return model.params();
}

json checkpoint_metadata(const lachesis::ExperimentConfig& cfg,
                         const lachesis::PreparedDataset& data) {
    json meta;
    meta["config"] = lachesis::config_to_json(cfg);
    meta["vocab_width"] = data.vocab_width;
    meta["feature_width"] = data.feature_width;
    meta["runs_per_bug"] = data.runs;
    meta["max_steps"] = data.max_steps;
    return meta;
}

int cmd_validate(const std::string& traces) {
    const lachesis::TraceFile file = lachesis::ingest_traces(traces);
    int bugsinpy = 0, defects4j = 0;
    for (const auto& bug : file.bugs)
        (bug.dataset == lachesis::DatasetKind::bugsinpy ? bugsinpy : defects4j) += 1;
    std::cout << file.bugs.size() << " bugs OK (R=" << file.runs_per_bug
              << ", N=" << file.max_steps << ", " << bugsinpy << " bugsinpy + " << defects4j
              << " defects4j)\n";
    return kExitOk;
}

int cmd_synth(const std::string& config_path, const std::string& out_dir,
              std::optional<std::uint64_t> seed) {
    const json j = read_json_file(config_path, "synth config");
    lachesis::SynthConfig cfg = lachesis::synth_config_from_json(j);
    if (seed)
        cfg.seed = *seed;
    else if (!j.contains("seed"))
        cfg.seed = seed_from_env_or_default();
    const lachesis::TraceFile file = lachesis::generate_traces(cfg);
    fs::create_directories(out_dir);
    const fs::path path = fs::path(out_dir) / "traces.json";
    lachesis::write_traces(file, path);
    int positives = 0;
    for (const auto& bug : file.bugs) positives += lachesis::label(bug) ? 1 : 0;
    std::cout << "wrote " << file.bugs.size() << " bugs to " << path.string() << " ("
              << positives << " labeled correct by voting)\n";
    return kExitOk;
}

int cmd_train(const TrainFlags& flags) {
    const lachesis::ExperimentConfig cfg = resolve_experiment_config(flags);
    const lachesis::TraceFile file = lachesis::ingest_traces(flags.traces);
    const lachesis::MetricsReport report = lachesis::run_experiment(cfg, file);

    fs::create_directories(flags.out_dir);
    const fs::path out(flags.out_dir);
    write_text_file(out / "metrics.json", lachesis::report_to_json(report).dump(2) + "\n");
    write_text_file(out / "metrics.csv", lachesis::metrics_csv(report, method_tag(cfg)));
    write_text_file(out / "roc.csv", lachesis::roc_csv(report));

    const lachesis::PreparedDataset data =
        lachesis::prepare_dataset(file, cfg.scheme, cfg.representation);
    const lachesis::nn::ParameterSet final_params = train_final_model(cfg, data);
    lachesis::nn::save_checkpoint(final_params, checkpoint_metadata(cfg, data),
                                  out / "checkpoint.json");

    std::cout << method_tag(cfg) << " on " << report.dataset_size << " bugs, " << cfg.folds
              << "-fold\n";
    for (const auto& fr : report.folds)
        std::cout << "fold " << fr.fold << ": accuracy " << fmt(fr.metrics.accuracy) << " auc "
                  << fmt(fr.roc_auc) << " precision " << fmt(fr.metrics.precision) << " recall "
                  << fmt(fr.metrics.recall) << " (epoch " << fr.selected_epoch << ")\n";
    std::cout << "mean: accuracy " << fmt(report.mean.accuracy) << " auc "
              << fmt(report.mean_roc_auc) << " precision " << fmt(report.mean.precision)
              << " recall " << fmt(report.mean.recall) << "\n";
    std::cout << "pooled: accuracy " << fmt(report.pooled.accuracy) << " auc "
              << fmt(report.pooled_roc_auc) << " precision " << fmt(report.pooled.precision)
              << " recall " << fmt(report.pooled.recall) << "\n";
    std::cout << "artifacts in " << out.string()
              << ": metrics.json metrics.csv roc.csv checkpoint.json\n";
    return kExitOk;
}

struct RestoredModel {
    lachesis::ExperimentConfig cfg;
    lachesis::PreparedDataset data;
    std::unique_ptr<lachesis::ModelAdapter> model;
};

RestoredModel restore_for_traces(const std::string& checkpoint_path,
                                 const lachesis::TraceFile& file) {
    const lachesis::nn::LoadedCheckpoint ckpt = lachesis::nn::load_checkpoint(checkpoint_path);
    if (!ckpt.metadata.contains("config"))
        throw lachesis::ConfigError("checkpoint: missing config metadata");
    RestoredModel r;
    r.cfg = lachesis::config_from_json(ckpt.metadata["config"]);
    const int vocab_width = ckpt.metadata.value("vocab_width", 0);
    if (vocab_width < 1) throw lachesis::ConfigError("checkpoint: missing vocab_width");
    r.data = lachesis::prepare_dataset(file, r.cfg.scheme, r.cfg.representation, vocab_width);
    r.model = std::make_unique<lachesis::ModelAdapter>(
        r.data, r.cfg.hyper, lachesis::SplitMix64(r.cfg.seed).split("restore"));
    lachesis::nn::restore_parameters(r.model->params(), ckpt);
    return r;
}

std::string predictions_csv(const lachesis::PreparedDataset& data,
                            const std::vector<double>& scores,
                            const std::vector<int>& labels, double threshold) {
    std::string out = "bug_id,score,predicted,label\n";
    char buf[64];
    for (std::size_t i = 0; i < data.bugs.size(); ++i) {
        std::snprintf(buf, sizeof buf, ",%.6f,%d,%d\n", scores[i],
                      scores[i] >= threshold ? 1 : 0, labels[i]);
        out += data.bugs[i].bug_id + buf;
    }
    return out;
}

void print_scored_metrics(const char* heading, const std::vector<double>& scores,
                          const std::vector<int>& labels, double threshold) {
    const lachesis::BasicMetrics m = lachesis::evaluate(scores, labels, threshold);
    double auc = std::numeric_limits<double>::quiet_NaN();
    try {
        auc = lachesis::roc_auc(scores, labels).auc;
    } catch (const lachesis::SingleClassError&) {
    }
    std::cout << heading << ": accuracy " << fmt(m.accuracy) << " auc " << fmt(auc)
              << " precision " << fmt(m.precision) << " recall " << fmt(m.recall) << " ("
              << labels.size() << " bugs)\n";
}

int cmd_eval(const std::string& checkpoint_path, const std::string& traces,
             std::optional<double> threshold_flag, const std::string& out_dir) {
    const lachesis::TraceFile file = lachesis::ingest_traces(traces);
    RestoredModel r = restore_for_traces(checkpoint_path, file);
    const double threshold = threshold_flag.value_or(r.cfg.threshold);

    std::vector<double> scores;
    scores.reserve(r.data.bugs.size());
    for (std::size_t i = 0; i < r.data.bugs.size(); ++i)
        scores.push_back(r.model->score(static_cast<int>(i)));
    const std::vector<int> labels = r.data.labels();

    print_scored_metrics("eval", scores, labels, threshold);
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        write_text_file(fs::path(out_dir) / "predictions.csv",
                        predictions_csv(r.data, scores, labels, threshold));
        std::cout << "wrote " << (fs::path(out_dir) / "predictions.csv").string() << "\n";
    }
    return kExitOk;
}

int cmd_predict(const std::string& checkpoint_path, const std::string& traces, int prefix_steps,
                std::optional<double> threshold_flag, const std::string& out_dir) {
    const lachesis::TraceFile file = lachesis::ingest_traces(traces);

    // Peek at the checkpoint scheme first: answer-dependent schemes cannot
    // run on prefixes, where answers do not exist yet.
    const lachesis::nn::LoadedCheckpoint ckpt = lachesis::nn::load_checkpoint(checkpoint_path);
    if (!ckpt.metadata.contains("config"))
        throw lachesis::ConfigError("checkpoint: missing config metadata");
    const lachesis::ExperimentConfig ckpt_cfg =
        lachesis::config_from_json(ckpt.metadata["config"]);
    if (ckpt_cfg.scheme != lachesis::Scheme::function &&
        ckpt_cfg.scheme != lachesis::Scheme::function_arg)
        throw lachesis::ConfigError(
            "prefix prediction requires scheme f or fa; checkpoint uses '" +
            std::string(lachesis::to_string(ckpt_cfg.scheme)) + "'");

    // True labels come from the full traces; the model only ever sees the
    // truncated prefix, which carries no answers.
    std::vector<int> labels;
    labels.reserve(file.bugs.size());
    for (const auto& bug : file.bugs) labels.push_back(lachesis::label(bug) ? 1 : 0);

    const lachesis::TraceFile prefix = lachesis::truncate_runs(file, prefix_steps);
    RestoredModel r = restore_for_traces(checkpoint_path, prefix);
    const double threshold = threshold_flag.value_or(r.cfg.threshold);

    std::vector<double> scores;
    scores.reserve(r.data.bugs.size());
    for (std::size_t i = 0; i < r.data.bugs.size(); ++i)
        scores.push_back(r.model->score(static_cast<int>(i)));

    std::cout << "prefix-steps " << prefix_steps << "\n";
    print_scored_metrics("predict", scores, labels, threshold);
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        write_text_file(fs::path(out_dir) / "predictions.csv",
                        predictions_csv(r.data, scores, labels, threshold));
        std::cout << "wrote " << (fs::path(out_dir) / "predictions.csv").string() << "\n";
    }
    return kExitOk;
}

int cmd_baseline(const std::string& traces, double threshold, const std::string& out_dir) {
    const lachesis::TraceFile file = lachesis::ingest_traces(traces);
    const std::vector<lachesis::BaselineRow> rows = lachesis::baseline_report(file, threshold);
    std::cout << "method        accuracy  roc_auc  precision  recall\n";
    for (const auto& r : rows) {
        char line[160];
        std::snprintf(line, sizeof line, "%-13s %-9s %-8s %-10s %s\n", r.method.c_str(),
                      fmt(r.accuracy).c_str(), fmt(r.roc_auc).c_str(), fmt(r.precision).c_str(),
                      fmt(r.recall).c_str());
        std::cout << line;
    }
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        write_text_file(fs::path(out_dir) / "baseline.csv", lachesis::baseline_csv(rows));
        write_text_file(fs::path(out_dir) / "baseline.json",
                        lachesis::baseline_to_json(rows).dump(2) + "\n");
        std::cout << "wrote baseline.csv and baseline.json to " << out_dir << "\n";
    }
    return kExitOk;
}

int cmd_gradcheck(std::optional<std::string> model, std::optional<std::uint64_t> seed_flag) {
    const std::uint64_t seed = seed_flag ? *seed_flag : seed_from_env_or_default();
    constexpr double kTolerance = 1e-4;
    std::vector<std::string> kinds;
    if (model)
        kinds.push_back(*model);
    else
        kinds = {"lstm", "gcn"};
    bool ok = true;
    for (const std::string& kind : kinds) {
        const lachesis::nn::GradCheckReport report = lachesis::nn::grad_check(kind, seed);
        const bool pass = report.max_rel_error < kTolerance;
        ok = ok && pass;
        char line[160];
        std::snprintf(line, sizeof line, "%s: max relative error %.3e over %zu parameters (%s)\n",
                      report.model.c_str(), report.max_rel_error, report.parameter_count,
                      pass ? "ok" : "FAIL");
        std::cout << line;
    }
    if (!ok)
        throw lachesis::NumericError("gradient check exceeded tolerance " +
                                     std::to_string(kTolerance));
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"reasoning-trace representations and self-consistency outcome prediction"};
    app.require_subcommand(1);

    // validate
    auto* validate = app.add_subcommand("validate", "check a trace file against the schema");
    std::string v_traces;
    validate->add_option("--traces", v_traces, "trace file (JSON)")->required();

    // synth
    auto* synth = app.add_subcommand("synth", "generate synthetic traces with a planted signal");
    std::string s_config, s_out = ".";
    std::optional<std::uint64_t> s_seed;
    synth->add_option("--config", s_config, "synth config (JSON)")->required();
    synth->add_option("--out", s_out, "output directory (writes traces.json)");
    synth->add_option("--seed", s_seed, "seed override");

    // train
    auto* train = app.add_subcommand("train", "cross-validate a model and write a checkpoint");
    TrainFlags t;
    train->add_option("--traces", t.traces, "trace file (JSON)")->required();
    train->add_option("--config", t.config_path, "experiment config (JSON)");
    train->add_option("--out", t.out_dir, "output directory");
    train->add_option("--model", t.model, "lstm|gcn (reselects the tuned preset)");
    train->add_option("--scheme", t.scheme, "s|f|fa|faa (reselects the tuned preset)");
    train->add_option("--epoch-selection", t.epoch_selection,
                      "paper (peak test accuracy) or final (last epoch)");
    train->add_option("--threshold", t.threshold, "classification threshold");
    train->add_option("--seed", t.seed, "seed (fallback: config, then LACHESIS_SEED, then 1)");
    train->add_option("--jobs", t.jobs, "concurrent folds (default 1)");
    train->add_flag("--stratified", t.stratified, "class-stratified folds");

    // eval
    auto* eval = app.add_subcommand("eval", "score traces with a trained checkpoint");
    std::string e_checkpoint, e_traces, e_out;
    std::optional<double> e_threshold;
    eval->add_option("--checkpoint", e_checkpoint, "checkpoint file")->required();
    eval->add_option("--traces", e_traces, "trace file (JSON)")->required();
    eval->add_option("--threshold", e_threshold, "classification threshold");
    eval->add_option("--out", e_out, "output directory (writes predictions.csv)");

    // predict
    auto* predict = app.add_subcommand(
        "predict", "score truncated reasoning prefixes (no answer information)");
    std::string p_checkpoint, p_traces, p_out;
    int p_prefix = 0;
    std::optional<double> p_threshold;
    predict->add_option("--checkpoint", p_checkpoint, "checkpoint file (scheme f or fa)")
        ->required();
    predict->add_option("--traces", p_traces, "trace file (JSON)")->required();
    predict->add_option("--prefix-steps", p_prefix, "steps of each run to keep")->required();
    predict->add_option("--threshold", p_threshold, "classification threshold");
    predict->add_option("--out", p_out, "output directory (writes predictions.csv)");

    // baseline
    auto* baseline = app.add_subcommand("baseline", "voting-confidence and all-positive baselines");
    std::string b_traces, b_out;
    double b_threshold = 0.5;
    baseline->add_option("--traces", b_traces, "trace file (JSON)")->required();
    baseline->add_option("--threshold", b_threshold, "confidence threshold (default 0.5)");
    baseline->add_option("--out", b_out, "output directory (writes baseline.csv/json)");

    // gradcheck
    auto* gradcheck =
        app.add_subcommand("gradcheck", "verify analytic gradients against finite differences");
    std::optional<std::string> g_model;
    std::optional<std::uint64_t> g_seed;
    gradcheck->add_option("--model", g_model, "lstm|gcn (default: both)");
    gradcheck->add_option("--seed", g_seed, "seed (fallback: LACHESIS_SEED, then 1)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfigError;
    }

    try {
        if (app.got_subcommand(validate)) return cmd_validate(v_traces);
        if (app.got_subcommand(synth)) return cmd_synth(s_config, s_out, s_seed);
        if (app.got_subcommand(train)) return cmd_train(t);
        if (app.got_subcommand(eval)) return cmd_eval(e_checkpoint, e_traces, e_threshold, e_out);
        if (app.got_subcommand(predict))
            return cmd_predict(p_checkpoint, p_traces, p_prefix, p_threshold, p_out);
        if (app.got_subcommand(baseline)) return cmd_baseline(b_traces, b_threshold, b_out);
        if (app.got_subcommand(gradcheck)) return cmd_gradcheck(g_model, g_seed);
        std::cerr << "error: no subcommand\n";
        return kExitConfigError;
    } catch (const lachesis::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const lachesis::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kExitNumericError;
    } catch (const lachesis::TraceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDataError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDataError;
    }
}
