#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "lachesis/errors.hpp"
#include "lachesis/nn/loss.hpp"
#include "lachesis/nn/matrix.hpp"
#include "lachesis/nn/params.hpp"
#include "lachesis/rng.hpp"

namespace lachesis::nn {

struct LstmHyper {
    int input_dim = 1;
    int hidden_dim = 1;
    int layers = 1;
    double dropout = 0.0;  // applied between stacked layers while training
};

// Stacked LSTM with a single fully connected head on the final hidden state
// of the top layer. Gates are packed [input, forget, candidate, output] in
// one preactivation vector per step. Weights are Glorot-uniform, biases
// zero except the forget gate at 1.
class LstmModel {
  public:
    LstmModel(const LstmHyper& hyper, SplitMix64 init_rng) : hyper_(hyper) {
        if (hyper.layers < 1) throw ConfigError("lstm: layers must be >= 1");
        if (hyper.hidden_dim < 1) throw ConfigError("lstm: hidden_dim must be >= 1");
        if (hyper.dropout < 0.0 || hyper.dropout >= 1.0)
            throw ConfigError("lstm: dropout must lie in [0,1)");
        const int h = hyper.hidden_dim;
        for (int l = 0; l < hyper.layers; ++l) {
            const int in_dim = l == 0 ? hyper.input_dim : h;
            Parameter& wx = params_.add("lstm" + std::to_string(l) + ".wx", 4 * h, in_dim);
            Parameter& wh = params_.add("lstm" + std::to_string(l) + ".wh", 4 * h, h);
            Parameter& b = params_.add("lstm" + std::to_string(l) + ".b", 1, 4 * h);
            glorot_uniform(wx.value, in_dim, h, init_rng);
            glorot_uniform(wh.value, h, h, init_rng);
            for (int j = h; j < 2 * h; ++j) b.value(0, j) = 1.0;  // forget gate
        }
        Parameter& fc_w = params_.add("fc.w", 1, h);
        Parameter& fc_b = params_.add("fc.b", 1, 1);
        glorot_uniform(fc_w.value, h, 1, init_rng);
        (void)fc_b;
    }

    const LstmHyper& hyper() const { return hyper_; }
    ParameterSet& params() { return params_; }
    const ParameterSet& params() const { return params_; }

    double forward(const std::vector<std::vector<double>>& seq, bool train,
                   SplitMix64* rng = nullptr) {
        const int steps = static_cast<int>(seq.size());
        const int h = hyper_.hidden_dim;
        for (const auto& v : seq)
            if (static_cast<int>(v.size()) != hyper_.input_dim)
                throw ConfigError("lstm: sequence width " + std::to_string(v.size()) +
                                  " does not match input_dim " +
                                  std::to_string(hyper_.input_dim));
        const bool use_dropout = train && hyper_.dropout > 0.0 && hyper_.layers > 1;
        if (use_dropout && rng == nullptr)
            throw ConfigError("lstm: dropout requires an rng while training");

        cache_.assign(hyper_.layers, {});
        masks_.assign(use_dropout ? hyper_.layers - 1 : 0, {});
        steps_ = steps;

        std::vector<std::vector<double>> inputs(seq.begin(), seq.end());
        for (int l = 0; l < hyper_.layers; ++l) {
            LayerCache& cache = cache_[l];
            cache.resize(steps);
            const Matrix& wx = params_.all()[3 * l + 0].value;
            const Matrix& wh = params_.all()[3 * l + 1].value;
            const Matrix& b = params_.all()[3 * l + 2].value;
            std::vector<double> h_prev(h, 0.0), c_prev(h, 0.0);
            std::vector<std::vector<double>> outputs(steps);
            for (int t = 0; t < steps; ++t) {
                StepCache& sc = cache[t];
                sc.x = std::move(inputs[t]);
                std::vector<double> pre(4 * h);
                for (int j = 0; j < 4 * h; ++j) {
                    double acc = b(0, j);
                    const double* wxj = wx.row(j);
                    for (std::size_t k = 0; k < sc.x.size(); ++k) acc += wxj[k] * sc.x[k];
                    const double* whj = wh.row(j);
                    for (int k = 0; k < h; ++k) acc += whj[k] * h_prev[k];
                    pre[j] = acc;
                }
                sc.i.resize(h); sc.f.resize(h); sc.g.resize(h); sc.o.resize(h);
                sc.c.resize(h); sc.tanh_c.resize(h); sc.h.resize(h);
                sc.c_prev = c_prev;
                for (int k = 0; k < h; ++k) {
                    sc.i[k] = sigmoid(pre[k]);
                    sc.f[k] = sigmoid(pre[h + k]);
                    sc.g[k] = std::tanh(pre[2 * h + k]);
                    sc.o[k] = sigmoid(pre[3 * h + k]);
                    sc.c[k] = sc.f[k] * c_prev[k] + sc.i[k] * sc.g[k];
                    sc.tanh_c[k] = std::tanh(sc.c[k]);
                    sc.h[k] = sc.o[k] * sc.tanh_c[k];
                }
                h_prev = sc.h;
                c_prev = sc.c;
                outputs[t] = sc.h;
            }
            if (l < hyper_.layers - 1) {
                if (use_dropout) {
                    masks_[l].resize(steps);
                    for (int t = 0; t < steps; ++t) {
                        Matrix mask(1, h);
                        dropout_mask(mask, hyper_.dropout, *rng);
                        for (int k = 0; k < h; ++k) outputs[t][k] *= mask(0, k);
                        masks_[l][t] = std::move(mask);
                    }
                }
                inputs = std::move(outputs);
            }
        }

        const Matrix& fc_w = params_.at("fc.w").value;
        const Matrix& fc_b = params_.at("fc.b").value;
        double logit = fc_b(0, 0);
        if (steps > 0) {
            const std::vector<double>& h_last = cache_.back()[steps - 1].h;
            for (int k = 0; k < h; ++k) logit += fc_w(0, k) * h_last[k];
        }
        has_forward_ = true;
        return logit;
    }

    // Accumulates dloss/dparam into the gradient buffers for the recorded
    // forward pass; callers batching samples zero the gradients themselves.
    void backward(double dlogit) {
        if (!has_forward_) throw std::logic_error("lstm: backward called before forward");
        const int h = hyper_.hidden_dim;
        const int steps = steps_;

        Matrix& fc_w = params_.at("fc.w").value;
        Matrix& fc_w_grad = params_.at("fc.w").grad;
        Matrix& fc_b_grad = params_.at("fc.b").grad;
        fc_b_grad(0, 0) += dlogit;

        // dh_ext[t]: gradient arriving at layer output h_t from outside the
        // layer (the head, or the layer above through its dropout mask).
        std::vector<std::vector<double>> dh_ext(steps, std::vector<double>(h, 0.0));
        if (steps > 0) {
            const std::vector<double>& h_last = cache_.back()[steps - 1].h;
            for (int k = 0; k < h; ++k) {
                fc_w_grad(0, k) += dlogit * h_last[k];
                dh_ext[steps - 1][k] += dlogit * fc_w(0, k);
            }
        }

        for (int l = hyper_.layers - 1; l >= 0; --l) {
            const Matrix& wx = params_.all()[3 * l + 0].value;
            const Matrix& wh = params_.all()[3 * l + 1].value;
            Matrix& wx_grad = params_.all()[3 * l + 0].grad;
            Matrix& wh_grad = params_.all()[3 * l + 1].grad;
            Matrix& b_grad = params_.all()[3 * l + 2].grad;
            const int in_dim = wx.cols();

            std::vector<std::vector<double>> dx(steps, std::vector<double>(in_dim, 0.0));
            std::vector<double> dh_carry(h, 0.0), dc(h, 0.0), dpre(4 * h);
            for (int t = steps - 1; t >= 0; --t) {
                const StepCache& sc = cache_[l][t];
                for (int k = 0; k < h; ++k) {
                    const double dh_total = dh_ext[t][k] + dh_carry[k];
                    const double d_o = dh_total * sc.tanh_c[k];
                    const double dc_total =
                        dc[k] + dh_total * sc.o[k] * (1.0 - sc.tanh_c[k] * sc.tanh_c[k]);
                    const double d_i = dc_total * sc.g[k];
                    const double d_g = dc_total * sc.i[k];
                    const double d_f = dc_total * sc.c_prev[k];
                    dc[k] = dc_total * sc.f[k];
                    dpre[k] = d_i * sc.i[k] * (1.0 - sc.i[k]);
                    dpre[h + k] = d_f * sc.f[k] * (1.0 - sc.f[k]);
                    dpre[2 * h + k] = d_g * (1.0 - sc.g[k] * sc.g[k]);
                    dpre[3 * h + k] = d_o * sc.o[k] * (1.0 - sc.o[k]);
                }
                const std::vector<double>& h_prev =
                    t > 0 ? cache_[l][t - 1].h : zero_vector(h);
                for (int j = 0; j < 4 * h; ++j) {
                    const double d = dpre[j];
                    if (d == 0.0) continue;
                    b_grad(0, j) += d;
                    double* wxj_grad = wx_grad.row(j);
                    for (int k = 0; k < in_dim; ++k) wxj_grad[k] += d * sc.x[k];
                    double* whj_grad = wh_grad.row(j);
                    for (int k = 0; k < h; ++k) whj_grad[k] += d * h_prev[k];
                }
                for (int k = 0; k < in_dim; ++k) {
                    double acc = 0.0;
                    for (int j = 0; j < 4 * h; ++j) acc += wx(j, k) * dpre[j];
                    dx[t][k] = acc;
                }
                for (int k = 0; k < h; ++k) {
                    double acc = 0.0;
                    for (int j = 0; j < 4 * h; ++j) acc += wh(j, k) * dpre[j];
                    dh_carry[k] = acc;
                }
            }

            if (l > 0) {
                const bool masked = !masks_.empty();
                for (int t = 0; t < steps; ++t)
                    for (int k = 0; k < h; ++k)
                        dh_ext[t][k] =
                            masked ? dx[t][k] * masks_[l - 1][t](0, k) : dx[t][k];
            }
        }
    }

  private:
    struct StepCache {
        std::vector<double> x, i, f, g, o, c, tanh_c, h, c_prev;
    };
    using LayerCache = std::vector<StepCache>;

    static const std::vector<double>& zero_vector(int n) {
        static thread_local std::vector<double> zeros;
        if (static_cast<int>(zeros.size()) < n) zeros.assign(n, 0.0);
        return zeros;
    }

    LstmHyper hyper_;
    ParameterSet params_;
    std::vector<LayerCache> cache_;
    std::vector<std::vector<Matrix>> masks_;  // [layer][t], layers-1 entries when training
    int steps_ = 0;
    bool has_forward_ = false;
};

}  // namespace lachesis::nn
