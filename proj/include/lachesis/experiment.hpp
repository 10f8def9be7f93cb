#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "lachesis/embedding.hpp"
#include "lachesis/errors.hpp"
#include "lachesis/nn/adam.hpp"
#include "lachesis/nn/gcn.hpp"
#include "lachesis/nn/loss.hpp"
#include "lachesis/nn/lstm.hpp"
#include "lachesis/representation.hpp"
#include "lachesis/rng.hpp"
#include "lachesis/trace.hpp"

namespace lachesis {

enum class ModelKind { lstm, gcn };
enum class Representation { matrix, graph };
enum class EpochSelection { peak_test, final_epoch };

inline std::string_view to_string(ModelKind m) { return m == ModelKind::lstm ? "lstm" : "gcn"; }
inline ModelKind model_from_string(std::string_view s) {
    if (s == "lstm") return ModelKind::lstm;
    if (s == "gcn") return ModelKind::gcn;
    throw ConfigError("unknown model '" + std::string(s) + "' (expected lstm|gcn)");
}

inline std::string_view to_string(Representation r) {
    return r == Representation::matrix ? "matrix" : "graph";
}
inline Representation representation_from_string(std::string_view s) {
    if (s == "matrix") return Representation::matrix;
    if (s == "graph") return Representation::graph;
    throw ConfigError("unknown representation '" + std::string(s) + "'");
}

inline std::string_view to_string(EpochSelection e) {
    return e == EpochSelection::peak_test ? "paper_peak_test" : "final_epoch";
}
inline EpochSelection epoch_selection_from_string(std::string_view s) {
    if (s == "paper_peak_test") return EpochSelection::peak_test;
    if (s == "final_epoch") return EpochSelection::final_epoch;
    throw ConfigError("unknown epoch_selection '" + std::string(s) + "'");
}

struct Hyperparameters {
    ModelKind model = ModelKind::gcn;
    int layers = 3;
    int hidden_dim = 64;
    int batch = 16;
    double dropout = 0.8;
    int epochs = 100;
    double learning_rate = 1e-3;
};

inline void validate_hyperparameters(const Hyperparameters& h) {
    if (h.layers < 1) throw ConfigError("hyperparameters: layers must be >= 1");
    if (h.hidden_dim < 1) throw ConfigError("hyperparameters: hidden_dim must be >= 1");
    if (h.batch < 1) throw ConfigError("hyperparameters: batch must be >= 1");
    if (h.dropout < 0.0 || h.dropout >= 1.0)
        throw ConfigError("hyperparameters: dropout must lie in [0,1)");
    if (h.epochs < 1) throw ConfigError("hyperparameters: epochs must be >= 1");
    if (!(h.learning_rate > 0.0)) throw ConfigError("hyperparameters: learning_rate must be > 0");
}

// Tuned settings per model/scheme pair; these ship as presets rather than
// being searched at runtime.
inline Hyperparameters preset(ModelKind model, Scheme scheme) {
    Hyperparameters h;
    h.model = model;
    h.learning_rate = 1e-3;
    if (model == ModelKind::lstm) {
        h.epochs = 50;
        switch (scheme) {
            case Scheme::function: h.layers = 1; h.hidden_dim = 32; h.batch = 64; h.dropout = 0.0; break;
            case Scheme::function_arg: h.layers = 2; h.hidden_dim = 128; h.batch = 16; h.dropout = 0.5; break;
            case Scheme::function_arg_answer: h.layers = 1; h.hidden_dim = 32; h.batch = 32; h.dropout = 0.0; break;
            default:
                throw ConfigError("scheme 's' is graph-only and has no lstm preset");
        }
    } else {
        h.epochs = 100;
        switch (scheme) {
            case Scheme::shape: h.layers = 3; h.hidden_dim = 128; h.batch = 32; h.dropout = 0.3; break;
            default: h.layers = 3; h.hidden_dim = 64; h.batch = 16; h.dropout = 0.8; break;
        }
    }
    return h;
}

inline Representation default_representation(ModelKind model) {
    return model == ModelKind::lstm ? Representation::matrix : Representation::graph;
}

struct ExperimentConfig {
    Scheme scheme = Scheme::function_arg;
    Representation representation = Representation::graph;
    Hyperparameters hyper;
    int folds = 10;
    std::uint64_t seed = 1;
    double threshold = 0.5;
    EpochSelection epoch_selection = EpochSelection::peak_test;
    bool stratified = false;
    int jobs = 1;
};

inline void validate_config(const ExperimentConfig& c) {
    validate_hyperparameters(c.hyper);
    if (c.folds < 2) throw ConfigError("config: folds must be >= 2");
    if (c.threshold < 0.0 || c.threshold > 1.0)
        throw ConfigError("config: threshold must lie in [0,1]");
    if (c.jobs < 1) throw ConfigError("config: jobs must be >= 1");
    if (c.hyper.model == ModelKind::lstm && c.representation != Representation::matrix)
        throw ConfigError("config: the lstm model consumes the matrix representation");
    if (c.hyper.model == ModelKind::gcn && c.representation != Representation::graph)
        throw ConfigError("config: the gcn model consumes the graph representation");
    if (c.representation == Representation::matrix && !scheme_matrix_compatible(c.scheme))
        throw ConfigError("config: scheme 's' is graph-only");
}

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
    nlohmann::json h;
    h["model"] = std::string(to_string(c.hyper.model));
    h["layers"] = c.hyper.layers;
    h["hidden_dim"] = c.hyper.hidden_dim;
    h["batch"] = c.hyper.batch;
    h["dropout"] = c.hyper.dropout;
    h["epochs"] = c.hyper.epochs;
    h["learning_rate"] = c.hyper.learning_rate;
    nlohmann::json j;
    j["scheme"] = std::string(to_string(c.scheme));
    j["representation"] = std::string(to_string(c.representation));
    j["hyperparameters"] = std::move(h);
    j["folds"] = c.folds;
    j["seed"] = c.seed;
    j["threshold"] = c.threshold;
    j["epoch_selection"] = std::string(to_string(c.epoch_selection));
    j["stratified"] = c.stratified;
    j["jobs"] = c.jobs;
    return j;
}

// Missing fields fall back to the tuned preset for the requested
// model/scheme pair; unknown keys are rejected so typos do not silently
// become defaults.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config: top level must be an object");
    static const std::vector<std::string> known = {
        "scheme", "representation", "hyperparameters", "folds",     "seed",
        "threshold", "epoch_selection", "stratified", "jobs"};
    for (auto it = j.begin(); it != j.end(); ++it)
        if (std::find(known.begin(), known.end(), it.key()) == known.end())
            throw ConfigError("config: unknown field '" + it.key() + "'");

    ExperimentConfig c;
    if (j.contains("scheme")) c.scheme = scheme_from_string(j["scheme"].get<std::string>());
    ModelKind model = ModelKind::gcn;
    const nlohmann::json hj =
        j.contains("hyperparameters") ? j["hyperparameters"] : nlohmann::json::object();
    if (!hj.is_object()) throw ConfigError("config: 'hyperparameters' must be an object");
    static const std::vector<std::string> known_h = {"model",   "layers", "hidden_dim",
                                                     "batch",   "dropout", "epochs",
                                                     "learning_rate"};
    for (auto it = hj.begin(); it != hj.end(); ++it)
        if (std::find(known_h.begin(), known_h.end(), it.key()) == known_h.end())
            throw ConfigError("config: unknown hyperparameter '" + it.key() + "'");
    if (hj.contains("model")) model = model_from_string(hj["model"].get<std::string>());
    c.hyper = preset(model, c.scheme);
    if (hj.contains("layers")) c.hyper.layers = hj["layers"].get<int>();
    if (hj.contains("hidden_dim")) c.hyper.hidden_dim = hj["hidden_dim"].get<int>();
    if (hj.contains("batch")) c.hyper.batch = hj["batch"].get<int>();
    if (hj.contains("dropout")) c.hyper.dropout = hj["dropout"].get<double>();
    if (hj.contains("epochs")) c.hyper.epochs = hj["epochs"].get<int>();
    if (hj.contains("learning_rate")) c.hyper.learning_rate = hj["learning_rate"].get<double>();
    c.representation = j.contains("representation")
                           ? representation_from_string(j["representation"].get<std::string>())
                           : default_representation(model);
    if (j.contains("folds")) c.folds = j["folds"].get<int>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("threshold")) c.threshold = j["threshold"].get<double>();
    if (j.contains("epoch_selection"))
        c.epoch_selection = epoch_selection_from_string(j["epoch_selection"].get<std::string>());
    if (j.contains("stratified")) c.stratified = j["stratified"].get<bool>();
    if (j.contains("jobs")) c.jobs = j["jobs"].get<int>();
    validate_config(c);
    return c;
}

// ---------------------------------------------------------------------------
// Folds and metrics
// ---------------------------------------------------------------------------

// Seeded shuffle then contiguous chunks; sizes differ by at most one and the
// chunks partition [0, n).
inline std::vector<std::vector<int>> kfold_split(int n, int k, std::uint64_t seed) {
    if (k < 2) throw ConfigError("kfold: k must be >= 2");
    if (n < k) throw ConfigError("kfold: need at least k=" + std::to_string(k) +
                                 " items, have " + std::to_string(n));
    std::vector<int> indices(n);
    std::iota(indices.begin(), indices.end(), 0);
    SplitMix64 rng = SplitMix64(seed).split("kfold");
    rng.shuffle(indices);
    std::vector<std::vector<int>> folds(k);
    int cursor = 0;
    for (int f = 0; f < k; ++f) {
        const int size = n / k + (f < n % k ? 1 : 0);
        folds[f].assign(indices.begin() + cursor, indices.begin() + cursor + size);
        cursor += size;
    }
    return folds;
}

// Class-balanced variant: shuffles within each class, then deals indices
// round-robin with a shared cursor so global fold sizes stay within one.
inline std::vector<std::vector<int>> kfold_split_stratified(int n, int k, std::uint64_t seed,
                                                            const std::vector<int>& labels) {
    if (static_cast<int>(labels.size()) != n)
        throw std::invalid_argument("stratified kfold: labels length mismatch");
    if (k < 2) throw ConfigError("kfold: k must be >= 2");
    if (n < k) throw ConfigError("kfold: need at least k=" + std::to_string(k) +
                                 " items, have " + std::to_string(n));
    std::vector<int> pos, neg;
    for (int i = 0; i < n; ++i) (labels[i] ? pos : neg).push_back(i);
    SplitMix64 rng = SplitMix64(seed).split("kfold_stratified");
    rng.shuffle(pos);
    rng.shuffle(neg);
    std::vector<std::vector<int>> folds(k);
    int cursor = 0;
    for (const std::vector<int>* cls : {&pos, &neg})
        for (int idx : *cls) folds[cursor++ % k].push_back(idx);
    return folds;
}

struct BasicMetrics {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
};

// prediction = score >= threshold; precision is 0 when nothing is predicted
// positive, recall is 0 when no positive labels exist.
inline BasicMetrics evaluate(const std::vector<double>& scores, const std::vector<int>& labels,
                             double threshold) {
    if (scores.size() != labels.size())
        throw std::invalid_argument("evaluate: scores and labels differ in length");
    if (scores.empty()) throw std::invalid_argument("evaluate: empty input");
    long tp = 0, fp = 0, tn = 0, fn = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool pred = scores[i] >= threshold;
        const bool truth = labels[i] != 0;
        if (pred && truth) ++tp;
        else if (pred) ++fp;
        else if (truth) ++fn;
        else ++tn;
    }
    BasicMetrics m;
    m.accuracy = static_cast<double>(tp + tn) / static_cast<double>(scores.size());
    m.precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
    m.recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
    return m;
}

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
    double threshold = 0.0;
};

struct RocResult {
    double auc = 0.0;
    std::vector<RocPoint> points;  // one per distinct threshold, ascending fpr;
                                   // the implicit curve start is (0,0)
};

// Rank (Mann-Whitney) formulation: the probability that a random positive
// outscores a random negative, ties counting half. Exactly invariant under
// any strictly increasing transform of the scores.
inline RocResult roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size())
        throw std::invalid_argument("roc_auc: scores and labels differ in length");
    const long positives = std::count_if(labels.begin(), labels.end(), [](int l) { return l != 0; });
    const long negatives = static_cast<long>(labels.size()) - positives;
    if (positives == 0 || negatives == 0)
        throw SingleClassError("ROC-AUC undefined: labels contain a single class");

    std::vector<int> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&scores](int a, int b) { return scores[a] < scores[b]; });

    // Sum of average ranks of the positives (1-based, ties share the mean rank).
    double pos_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double mean_rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k)
            if (labels[order[k]] != 0) pos_rank_sum += mean_rank;
        i = j + 1;
    }
    RocResult result;
    result.auc = (pos_rank_sum - static_cast<double>(positives) * (positives + 1) / 2.0) /
                 (static_cast<double>(positives) * static_cast<double>(negatives));

    // Sweep thresholds from high to low; one point per distinct score.
    long tp = 0, fp = 0;
    for (std::size_t hi = order.size(); hi > 0;) {
        std::size_t lo = hi;
        const double threshold = scores[order[hi - 1]];
        while (lo > 0 && scores[order[lo - 1]] == threshold) {
            if (labels[order[lo - 1]] != 0) ++tp;
            else ++fp;
            --lo;
        }
        result.points.push_back({static_cast<double>(fp) / negatives,
                                 static_cast<double>(tp) / positives, threshold});
        hi = lo;
    }
    return result;
}

// ---------------------------------------------------------------------------
// Prepared datasets and the model adapter
// ---------------------------------------------------------------------------

struct PreparedBug {
    std::string bug_id;
    int correct = 0;                                  // voting label
    std::vector<std::vector<double>> sequence;        // matrix representation, flattened
    std::optional<InferenceGraph> graph;              // absent when degenerate
};

struct PreparedDataset {
    Scheme scheme = Scheme::function_arg;
    Representation representation = Representation::graph;
    int feature_width = 0;
    int vocab_width = 0;
    int runs = 0;
    int max_steps = 0;
    std::vector<PreparedBug> bugs;

    std::vector<int> labels() const {
        std::vector<int> out;
        out.reserve(bugs.size());
        for (const PreparedBug& b : bugs) out.push_back(b.correct);
        return out;
    }
};

// Builds every bug's representation once; folds share them read-only.
// Graphs with zero nodes are kept as degenerate entries: the harness scores
// them 0.0 instead of feeding them to the model.
inline PreparedDataset prepare_dataset(const TraceFile& file, Scheme scheme,
                                       Representation repr, int width_override = 0) {
    if (repr == Representation::matrix && !scheme_matrix_compatible(scheme))
        throw ConfigError("scheme 's' is graph-only");
    PreparedDataset data;
    data.scheme = scheme;
    data.representation = repr;
    data.runs = file.runs_per_bug;
    data.max_steps = file.max_steps;
    const Vocabulary vocab = build_vocabulary(file.bugs);
    data.vocab_width = width_override == 0 ? vocab.width
                                           : detail::effective_width(vocab, width_override);
    data.feature_width = feature_width(scheme, data.vocab_width);
    data.bugs.reserve(file.bugs.size());
    for (const BugTrace& bug : file.bugs) {
        PreparedBug pb;
        pb.bug_id = bug.bug_id;
        if (repr == Representation::matrix) {
            InferenceMatrix m = build_lim(bug, scheme, vocab, file.max_steps, width_override);
            pb.correct = m.correct ? 1 : 0;
            pb.sequence = lstm_sequence(m);
        } else {
            InferenceGraph g = build_lig(bug, scheme, vocab, width_override);
            pb.correct = g.correct ? 1 : 0;
            if (!g.nodes.empty()) pb.graph = std::move(g);
        }
        data.bugs.push_back(std::move(pb));
    }
    return data;
}

// Uniform driver over the two model families; sample addressing is by index
// into the prepared dataset.
class ModelAdapter {
  public:
    ModelAdapter(const PreparedDataset& data, const Hyperparameters& hyper, SplitMix64 init_rng)
        : data_(&data) {
        if (hyper.model == ModelKind::lstm) {
            lstm_.emplace(nn::LstmHyper{data.feature_width, hyper.hidden_dim, hyper.layers,
                                        hyper.dropout},
                          init_rng);
        } else {
            gcn_.emplace(nn::GcnHyper{data.feature_width, hyper.hidden_dim, hyper.layers,
                                      hyper.dropout},
                         init_rng);
        }
    }

    bool trainable(int idx) const {
        return lstm_.has_value() || data_->bugs[idx].graph.has_value();
    }

    double forward(int idx, bool train, SplitMix64* rng) {
        const PreparedBug& bug = data_->bugs[idx];
        if (lstm_) return lstm_->forward(bug.sequence, train, rng);
        if (!bug.graph)
            throw DegenerateGraphError("bug '" + bug.bug_id + "': empty graph cannot be scored");
        return gcn_->forward(*bug.graph, train, rng);
    }

    void backward(double dlogit) {
        if (lstm_) lstm_->backward(dlogit);
        else gcn_->backward(dlogit);
    }

    // Evaluation-mode prediction score; degenerate bugs score 0.0
    // (predicted incorrect) so fold partitions stay exact.
    double score(int idx) {
        if (!trainable(idx)) return 0.0;
        return nn::sigmoid(forward(idx, false, nullptr));
    }

    nn::ParameterSet& params() { return lstm_ ? lstm_->params() : gcn_->params(); }

  private:
    const PreparedDataset* data_;
    std::optional<nn::LstmModel> lstm_;
    std::optional<nn::GcnModel> gcn_;
};

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct EpochStats {
    double train_loss = 0.0;
    double test_accuracy = 0.0;
    double test_precision = 0.0;
    double test_recall = 0.0;
    double test_auc = std::numeric_limits<double>::quiet_NaN();  // NaN = undefined
};

struct FoldResult {
    int fold = 0;
    std::vector<int> test_indices;
    std::vector<int> test_labels;
    std::vector<double> test_scores;  // at the selected epoch
    std::vector<EpochStats> history;
    int selected_epoch = 0;
    BasicMetrics metrics;
    double roc_auc = std::numeric_limits<double>::quiet_NaN();
    std::vector<RocPoint> roc_points;
};

// Trains on the union of the other folds and evaluates the held-out fold
// after every epoch. Stream derivation is per (seed, fold), so folds can
// run concurrently and still reproduce bit-for-bit.
inline FoldResult train_fold(const ExperimentConfig& config, const PreparedDataset& data,
                             const std::vector<std::vector<int>>& folds, int fold_index) {
    const std::vector<int>& test_indices = folds[fold_index];
    std::vector<int> train_indices;
    for (std::size_t f = 0; f < folds.size(); ++f) {
        if (static_cast<int>(f) == fold_index) continue;
        train_indices.insert(train_indices.end(), folds[f].begin(), folds[f].end());
    }

    SplitMix64 base = SplitMix64(config.seed).split("fold").split(fold_index + 1);
    ModelAdapter model(data, config.hyper, base.split("init"));
    SplitMix64 train_rng = base.split("train");

    std::vector<int> usable;
    for (int idx : train_indices)
        if (model.trainable(idx)) usable.push_back(idx);

    FoldResult result;
    result.fold = fold_index;
    result.test_indices = test_indices;
    for (int idx : test_indices) result.test_labels.push_back(data.bugs[idx].correct);

    const nn::AdamConfig adam{.learning_rate = config.hyper.learning_rate};
    std::int64_t step = 0;
    std::vector<std::vector<double>> scores_per_epoch;
    scores_per_epoch.reserve(config.hyper.epochs);

    for (int epoch = 0; epoch < config.hyper.epochs; ++epoch) {
        train_rng.shuffle(usable);
        double loss_sum = 0.0;
        long loss_count = 0;
        for (std::size_t start = 0; start < usable.size(); start += config.hyper.batch) {
            const std::size_t end = std::min(usable.size(),
                                             start + static_cast<std::size_t>(config.hyper.batch));
            const double inv_batch = 1.0 / static_cast<double>(end - start);
            model.params().zero_grads();
            for (std::size_t i = start; i < end; ++i) {
                const int idx = usable[i];
                const bool target = data.bugs[idx].correct != 0;
                const double logit = model.forward(idx, true, &train_rng);
                loss_sum += nn::bce_loss(logit, target);
                ++loss_count;
                model.backward(nn::bce_dlogit(logit, target) * inv_batch);
            }
            nn::adam_step(model.params(), adam, ++step);
        }

        std::vector<double> scores;
        scores.reserve(test_indices.size());
        for (int idx : test_indices) scores.push_back(model.score(idx));

        EpochStats stats;
        stats.train_loss = loss_count > 0 ? loss_sum / loss_count : 0.0;
        const BasicMetrics m = evaluate(scores, result.test_labels, config.threshold);
        stats.test_accuracy = m.accuracy;
        stats.test_precision = m.precision;
        stats.test_recall = m.recall;
        try {
            stats.test_auc = roc_auc(scores, result.test_labels).auc;
        } catch (const SingleClassError&) {
        }
        result.history.push_back(stats);
        scores_per_epoch.push_back(std::move(scores));
    }

    int selected = static_cast<int>(result.history.size()) - 1;
    if (config.epoch_selection == EpochSelection::peak_test) {
        selected = 0;
        for (std::size_t e = 1; e < result.history.size(); ++e)
            if (result.history[e].test_accuracy > result.history[selected].test_accuracy)
                selected = static_cast<int>(e);
    }
    result.selected_epoch = selected;
    result.test_scores = scores_per_epoch[selected];
    result.metrics = evaluate(result.test_scores, result.test_labels, config.threshold);
    try {
        RocResult roc = roc_auc(result.test_scores, result.test_labels);
        result.roc_auc = roc.auc;
        result.roc_points = std::move(roc.points);
    } catch (const SingleClassError&) {
    }
    return result;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct MeanRocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
};

struct MetricsReport {
    ExperimentConfig config;
    int dataset_size = 0;
    std::vector<FoldResult> folds;
    BasicMetrics mean;                  // unweighted mean over folds
    double mean_roc_auc = std::numeric_limits<double>::quiet_NaN();
    BasicMetrics pooled;                // all selected-epoch predictions pooled
    double pooled_roc_auc = std::numeric_limits<double>::quiet_NaN();
    std::vector<MeanRocPoint> mean_curve;  // vertical average over folds
};

namespace detail {

// Step interpolation of a fold's ROC curve (implicit start at the origin).
inline double tpr_at(const std::vector<RocPoint>& points, double fpr) {
    double tpr = 0.0;
    for (const RocPoint& p : points) {
        if (p.fpr <= fpr) tpr = std::max(tpr, p.tpr);
        else break;
    }
    return tpr;
}

}  // namespace detail

inline MetricsReport run_experiment(const ExperimentConfig& config, const TraceFile& file) {
    validate_config(config);
    const PreparedDataset data = prepare_dataset(file, config.scheme, config.representation);
    const int n = static_cast<int>(data.bugs.size());
    if (n < config.folds)
        throw ConfigError("dataset has " + std::to_string(n) + " bugs, fewer than " +
                          std::to_string(config.folds) + " folds");
    const std::vector<int> labels = data.labels();
    const std::vector<std::vector<int>> folds =
        config.stratified ? kfold_split_stratified(n, config.folds, config.seed, labels)
                          : kfold_split(n, config.folds, config.seed);

    std::vector<FoldResult> results(config.folds);
    std::vector<std::exception_ptr> errors(config.folds);
    if (config.jobs <= 1) {
        for (int f = 0; f < config.folds; ++f)
            results[f] = train_fold(config, data, folds, f);
    } else {
        std::atomic<int> next{0};
        auto worker = [&]() {
            for (int f = next.fetch_add(1); f < config.folds; f = next.fetch_add(1)) {
                try {
                    results[f] = train_fold(config, data, folds, f);
                } catch (...) {
                    errors[f] = std::current_exception();
                }
            }
        };
        std::vector<std::thread> pool;
        const int workers = std::min(config.jobs, config.folds);
        pool.reserve(workers);
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
        for (const std::exception_ptr& e : errors)
            if (e) std::rethrow_exception(e);
    }

    MetricsReport report;
    report.config = config;
    report.dataset_size = n;
    report.folds = std::move(results);

    double auc_sum = 0.0;
    int auc_count = 0;
    std::vector<double> pooled_scores;
    std::vector<int> pooled_labels;
    for (const FoldResult& fr : report.folds) {
        report.mean.accuracy += fr.metrics.accuracy;
        report.mean.precision += fr.metrics.precision;
        report.mean.recall += fr.metrics.recall;
        if (!std::isnan(fr.roc_auc)) {
            auc_sum += fr.roc_auc;
            ++auc_count;
        }
        pooled_scores.insert(pooled_scores.end(), fr.test_scores.begin(), fr.test_scores.end());
        pooled_labels.insert(pooled_labels.end(), fr.test_labels.begin(), fr.test_labels.end());
    }
    const double k = static_cast<double>(report.folds.size());
    report.mean.accuracy /= k;
    report.mean.precision /= k;
    report.mean.recall /= k;
    if (auc_count > 0) report.mean_roc_auc = auc_sum / auc_count;

    report.pooled = evaluate(pooled_scores, pooled_labels, config.threshold);
    try {
        report.pooled_roc_auc = roc_auc(pooled_scores, pooled_labels).auc;
    } catch (const SingleClassError&) {
    }

    for (int i = 0; i <= 100; ++i) {
        const double fpr = static_cast<double>(i) / 100.0;
        double tpr_sum = 0.0;
        int curves = 0;
        for (const FoldResult& fr : report.folds) {
            if (fr.roc_points.empty()) continue;
            tpr_sum += detail::tpr_at(fr.roc_points, fpr);
            ++curves;
        }
        if (curves > 0) report.mean_curve.push_back({fpr, tpr_sum / curves});
    }
    return report;
}

// ---------------------------------------------------------------------------
// Baselines
// ---------------------------------------------------------------------------

struct BaselineRow {
    std::string method;
    double accuracy = 0.0;
    double roc_auc = std::numeric_limits<double>::quiet_NaN();  // NaN = undefined
    double precision = 0.0;
    double recall = 0.0;
    std::vector<RocPoint> roc_points;
};

// Two reference rows: the voting-confidence classifier at the given
// threshold, and the degenerate all-positive predictor that exposes the
// dataset imbalance.
inline std::vector<BaselineRow> baseline_report(const TraceFile& file, double threshold) {
    if (threshold < 0.0 || threshold > 1.0)
        throw ConfigError("baseline: threshold must lie in [0,1]");
    if (file.bugs.empty()) throw TraceError("baseline: no bugs in trace file");
    std::vector<double> scores;
    std::vector<int> labels;
    scores.reserve(file.bugs.size());
    labels.reserve(file.bugs.size());
    for (const BugTrace& bug : file.bugs) {
        scores.push_back(confidence(vote_scores(bug)).to_double());
        labels.push_back(label(bug) ? 1 : 0);
    }

    BaselineRow conf;
    conf.method = "confidence";
    const BasicMetrics cm = evaluate(scores, labels, threshold);
    conf.accuracy = cm.accuracy;
    conf.precision = cm.precision;
    conf.recall = cm.recall;
    try {
        RocResult roc = roc_auc(scores, labels);
        conf.roc_auc = roc.auc;
        conf.roc_points = std::move(roc.points);
    } catch (const SingleClassError&) {
    }

    BaselineRow all_pos;
    all_pos.method = "all_positive";
    const std::vector<double> ones(scores.size(), 1.0);
    const BasicMetrics am = evaluate(ones, labels, threshold);
    all_pos.accuracy = am.accuracy;
    all_pos.precision = am.precision;
    all_pos.recall = am.recall;  // exactly 1 whenever a positive label exists
    return {std::move(conf), std::move(all_pos)};
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::json json_or_null(double v) {
    if (std::isnan(v)) return nullptr;
    return v;
}

}  // namespace detail

inline nlohmann::json report_to_json(const MetricsReport& report) {
    nlohmann::json j;
    j["config"] = config_to_json(report.config);
    j["dataset_size"] = report.dataset_size;
    nlohmann::json folds = nlohmann::json::array();
    for (const FoldResult& fr : report.folds) {
        nlohmann::json jf;
        jf["fold"] = fr.fold;
        jf["test_size"] = fr.test_indices.size();
        jf["selected_epoch"] = fr.selected_epoch;
        jf["accuracy"] = fr.metrics.accuracy;
        jf["roc_auc"] = detail::json_or_null(fr.roc_auc);
        jf["precision"] = fr.metrics.precision;
        jf["recall"] = fr.metrics.recall;
        nlohmann::json points = nlohmann::json::array();
        for (const RocPoint& p : fr.roc_points)
            points.push_back({{"fpr", p.fpr}, {"tpr", p.tpr}, {"threshold", p.threshold}});
        jf["roc_points"] = std::move(points);
        nlohmann::json history = nlohmann::json::array();
        for (std::size_t e = 0; e < fr.history.size(); ++e)
            history.push_back({{"epoch", e},
                               {"train_loss", fr.history[e].train_loss},
                               {"test_accuracy", fr.history[e].test_accuracy}});
        jf["history"] = std::move(history);
        folds.push_back(std::move(jf));
    }
    j["folds"] = std::move(folds);
    j["mean"] = {{"accuracy", report.mean.accuracy},
                 {"roc_auc", detail::json_or_null(report.mean_roc_auc)},
                 {"precision", report.mean.precision},
                 {"recall", report.mean.recall}};
    j["pooled"] = {{"accuracy", report.pooled.accuracy},
                   {"roc_auc", detail::json_or_null(report.pooled_roc_auc)},
                   {"precision", report.pooled.precision},
                   {"recall", report.pooled.recall}};
    nlohmann::json curve = nlohmann::json::array();
    for (const MeanRocPoint& p : report.mean_curve)
        curve.push_back({{"fpr", p.fpr}, {"tpr", p.tpr}});
    j["mean_roc_curve"] = std::move(curve);
    return j;
}

namespace detail {

inline std::string csv_metric(double v) {
    if (std::isnan(v)) return "";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

}  // namespace detail

// One row per method x fold plus the aggregate rows.
inline std::string metrics_csv(const MetricsReport& report, const std::string& method) {
    std::string out = "method,fold,accuracy,roc_auc,precision,recall,selected_epoch\n";
    for (const FoldResult& fr : report.folds) {
        out += method + "," + std::to_string(fr.fold) + "," +
               detail::csv_metric(fr.metrics.accuracy) + "," + detail::csv_metric(fr.roc_auc) +
               "," + detail::csv_metric(fr.metrics.precision) + "," +
               detail::csv_metric(fr.metrics.recall) + "," + std::to_string(fr.selected_epoch) +
               "\n";
    }
    out += method + ",mean," + detail::csv_metric(report.mean.accuracy) + "," +
           detail::csv_metric(report.mean_roc_auc) + "," +
           detail::csv_metric(report.mean.precision) + "," +
           detail::csv_metric(report.mean.recall) + ",\n";
    out += method + ",pooled," + detail::csv_metric(report.pooled.accuracy) + "," +
           detail::csv_metric(report.pooled_roc_auc) + "," +
           detail::csv_metric(report.pooled.precision) + "," +
           detail::csv_metric(report.pooled.recall) + ",\n";
    return out;
}

inline std::string roc_csv(const MetricsReport& report) {
    std::string out = "fold,fpr,tpr,threshold\n";
    char buf[128];
    for (const FoldResult& fr : report.folds)
        for (const RocPoint& p : fr.roc_points) {
            std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g\n", fr.fold, p.fpr, p.tpr,
                          p.threshold);
            out += buf;
        }
    return out;
}

inline std::string baseline_csv(const std::vector<BaselineRow>& rows) {
    std::string out = "method,accuracy,roc_auc,precision,recall\n";
    for (const BaselineRow& r : rows)
        out += r.method + "," + detail::csv_metric(r.accuracy) + "," +
               detail::csv_metric(r.roc_auc) + "," + detail::csv_metric(r.precision) + "," +
               detail::csv_metric(r.recall) + "\n";
    return out;
}

inline nlohmann::json baseline_to_json(const std::vector<BaselineRow>& rows) {
    nlohmann::json arr = nlohmann::json::array();
    for (const BaselineRow& r : rows) {
        nlohmann::json jr;
        jr["method"] = r.method;
        jr["accuracy"] = r.accuracy;
        jr["roc_auc"] = detail::json_or_null(r.roc_auc);
        jr["precision"] = r.precision;
        jr["recall"] = r.recall;
        nlohmann::json points = nlohmann::json::array();
        for (const RocPoint& p : r.roc_points)
            points.push_back({{"fpr", p.fpr}, {"tpr", p.tpr}, {"threshold", p.threshold}});
        jr["roc_points"] = std::move(points);
        arr.push_back(std::move(jr));
    }
    return arr;
}

}  // namespace lachesis
