#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "lachesis/errors.hpp"
#include "lachesis/nn/gcn.hpp"
#include "lachesis/nn/loss.hpp"
#include "lachesis/nn/lstm.hpp"
#include "lachesis/rng.hpp"
#include "lachesis/representation.hpp"

namespace lachesis::nn {

struct GradCheckReport {
    std::string model;
    double max_rel_error = 0.0;
    std::string worst_parameter;
    std::size_t parameter_count = 0;
};

inline constexpr double kGradCheckEpsilon = 1e-5;

namespace detail {

// Guarded relative error: near-zero gradient pairs are compared on an
// absolute scale so finite-difference cancellation noise cannot dominate.
inline double rel_error(double analytic, double numeric) {
    const double denom = std::max(std::fabs(analytic) + std::fabs(numeric), 1e-3);
    return std::fabs(analytic - numeric) / denom;
}

template <typename Model, typename Forward>
GradCheckReport check_model(Model& model, Forward&& run_forward, bool target,
                            std::string model_name) {
    GradCheckReport report;
    report.model = std::move(model_name);
    report.parameter_count = model.params().scalar_count();

    model.params().zero_grads();
    const double logit = run_forward();
    model.backward(bce_dlogit(logit, target));

    // Snapshot analytic gradients before perturbing parameters.
    std::vector<std::vector<double>> analytic;
    for (const Parameter& p : model.params().all())
        analytic.emplace_back(p.grad.data(), p.grad.data() + p.grad.size());

    for (std::size_t pi = 0; pi < model.params().all().size(); ++pi) {
        Parameter& p = model.params().all()[pi];
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double saved = p.value.data()[i];
            p.value.data()[i] = saved + kGradCheckEpsilon;
            const double loss_hi = bce_loss(run_forward(), target);
            p.value.data()[i] = saved - kGradCheckEpsilon;
            const double loss_lo = bce_loss(run_forward(), target);
            p.value.data()[i] = saved;
            const double numeric = (loss_hi - loss_lo) / (2.0 * kGradCheckEpsilon);
            const double err = rel_error(analytic[pi][i], numeric);
            if (err > report.max_rel_error) {
                report.max_rel_error = err;
                report.worst_parameter = p.name + "[" + std::to_string(i) + "]";
            }
        }
    }
    return report;
}

}  // namespace detail

// Compares analytic gradients against central finite differences for every
// parameter of a small LSTM. Dropout is forced to zero so repeated forward
// passes are deterministic.
inline GradCheckReport grad_check_lstm(LstmHyper hyper, int seq_len, std::uint64_t seed) {
    hyper.dropout = 0.0;
    SplitMix64 rng(seed);
    LstmModel model(hyper, rng.split("init"));

    SplitMix64 data_rng = rng.split("data");
    std::vector<std::vector<double>> seq(seq_len, std::vector<double>(hyper.input_dim));
    for (auto& step : seq)
        for (double& v : step) v = data_rng.next_uniform(-1.0, 1.0);
    const bool target = data_rng.next_bernoulli(0.5);

    return detail::check_model(
        model, [&model, &seq]() { return model.forward(seq, true, nullptr); }, target,
        "lstm");
}

// Same check for a small GCN on a random weighted digraph.
inline GradCheckReport grad_check_gcn(GcnHyper hyper, int nodes, std::uint64_t seed) {
    hyper.dropout = 0.0;
    SplitMix64 rng(seed);
    GcnModel model(hyper, rng.split("init"));

    SplitMix64 data_rng = rng.split("data");
    InferenceGraph g;
    g.bug_id = "gradcheck";
    for (int i = 0; i < nodes; ++i) {
        GraphNode node;
        node.key = "n" + std::to_string(i);
        node.feature.resize(hyper.input_dim);
        for (double& v : node.feature) v = data_rng.next_uniform(-1.0, 1.0);
        g.nodes.push_back(std::move(node));
    }
    for (int i = 0; i < nodes; ++i)
        for (int j = 0; j < nodes; ++j)
            if (data_rng.next_bernoulli(0.3))
                g.edges.push_back({i, j, static_cast<std::int64_t>(1 + data_rng.next_below(3))});
    const bool target = data_rng.next_bernoulli(0.5);

    return detail::check_model(
        model, [&model, &g]() { return model.forward(g, true, nullptr); }, target, "gcn");
}

// Default desk-size configurations.
inline GradCheckReport grad_check(std::string_view model_kind, std::uint64_t seed) {
    if (model_kind == "lstm")
        return grad_check_lstm({.input_dim = 3, .hidden_dim = 4, .layers = 2}, 6, seed);
    if (model_kind == "gcn")
        return grad_check_gcn({.input_dim = 3, .hidden_dim = 4, .layers = 3}, 5, seed);
    throw ConfigError("unknown model '" + std::string(model_kind) + "' (expected lstm|gcn)");
}

}  // namespace lachesis::nn
