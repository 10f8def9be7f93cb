#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "lachesis/errors.hpp"
#include "lachesis/nn/matrix.hpp"
#include "lachesis/nn/params.hpp"
#include "lachesis/representation.hpp"
#include "lachesis/rng.hpp"

namespace lachesis::nn {

struct GcnHyper {
    int input_dim = 1;
    int hidden_dim = 1;
    int layers = 1;
    double dropout = 0.0;  // after ReLU on every round but the last
};

// Symmetric-normalized adjacency D^{-1/2} (A + I) D^{-1/2} where A[i][j]
// carries the weight of edge i->j and D holds row sums of A + I. A graph
// with no edges yields exactly the identity.
inline Matrix normalized_adjacency(const InferenceGraph& g,
                                   const std::vector<int>& order) {
    const int n = static_cast<int>(order.size());
    std::vector<int> position(n);
    for (int i = 0; i < n; ++i) position[order[i]] = i;

    Matrix a(n, n);
    for (int i = 0; i < n; ++i) a(i, i) = 1.0;  // self-loop weight 1
    for (const GraphEdge& e : g.edges)
        a(position[e.src], position[e.dst]) += static_cast<double>(e.weight);

    std::vector<double> inv_sqrt_deg(n);
    for (int i = 0; i < n; ++i) {
        double deg = 0.0;
        for (int j = 0; j < n; ++j) deg += a(i, j);
        inv_sqrt_deg[i] = 1.0 / std::sqrt(deg);
    }
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) a(i, j) *= inv_sqrt_deg[i] * inv_sqrt_deg[j];
    return a;
}

// Graph convolution stack: `layers` rounds of H <- Â H W, with ReLU and
// dropout after every round but the last, then global mean pooling and a
// fully connected head. Node order is canonicalized by sorting content
// keys, so the logit is bit-identical under any permutation of node
// indices.
class GcnModel {
  public:
    GcnModel(const GcnHyper& hyper, SplitMix64 init_rng) : hyper_(hyper) {
        if (hyper.layers < 1) throw ConfigError("gcn: layers must be >= 1");
        if (hyper.hidden_dim < 1) throw ConfigError("gcn: hidden_dim must be >= 1");
        if (hyper.dropout < 0.0 || hyper.dropout >= 1.0)
            throw ConfigError("gcn: dropout must lie in [0,1)");
        const int h = hyper.hidden_dim;
        for (int l = 0; l < hyper.layers; ++l) {
            const int in_dim = l == 0 ? hyper.input_dim : h;
            Parameter& w = params_.add("gcn" + std::to_string(l) + ".w", in_dim, h);
            glorot_uniform(w.value, in_dim, h, init_rng);
        }
        Parameter& fc_w = params_.add("fc.w", 1, h);
        Parameter& fc_b = params_.add("fc.b", 1, 1);
        glorot_uniform(fc_w.value, h, 1, init_rng);
        (void)fc_b;
    }

    const GcnHyper& hyper() const { return hyper_; }
    ParameterSet& params() { return params_; }
    const ParameterSet& params() const { return params_; }

    double forward(const InferenceGraph& g, bool train, SplitMix64* rng = nullptr) {
        const int n = static_cast<int>(g.nodes.size());
        if (n == 0)
            throw DegenerateGraphError("bug '" + g.bug_id +
                                       "': empty graph cannot be pooled");
        const bool use_dropout = train && hyper_.dropout > 0.0;
        if (use_dropout && rng == nullptr)
            throw ConfigError("gcn: dropout requires an rng while training");

        // Fixed summation order: nodes sorted by content key.
        std::vector<int> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(),
                  [&g](int a, int b) { return g.nodes[a].key < g.nodes[b].key; });

        a_hat_ = normalized_adjacency(g, order);
        mixed_.assign(hyper_.layers, Matrix());
        relu_mask_.assign(hyper_.layers, Matrix());
        drop_mask_.assign(hyper_.layers, Matrix());

        Matrix h(n, hyper_.input_dim);
        for (int i = 0; i < n; ++i) {
            const std::vector<double>& f = g.nodes[order[i]].feature;
            if (static_cast<int>(f.size()) != hyper_.input_dim)
                throw ConfigError("gcn: node feature width " + std::to_string(f.size()) +
                                  " does not match input_dim " +
                                  std::to_string(hyper_.input_dim));
            std::copy(f.begin(), f.end(), h.row(i));
        }

        for (int l = 0; l < hyper_.layers; ++l) {
            matmul_into(a_hat_, h, mixed_[l]);
            h = matmul(mixed_[l], params_.all()[l].value);
            if (l < hyper_.layers - 1) {
                Matrix& relu = relu_mask_[l];
                relu = Matrix(h.rows(), h.cols());
                for (std::size_t i = 0; i < h.size(); ++i) {
                    relu.data()[i] = h.data()[i] > 0.0 ? 1.0 : 0.0;
                    if (h.data()[i] <= 0.0) h.data()[i] = 0.0;
                }
                if (use_dropout) {
                    Matrix& mask = drop_mask_[l];
                    mask = Matrix(h.rows(), h.cols());
                    dropout_mask(mask, hyper_.dropout, *rng);
                    for (std::size_t i = 0; i < h.size(); ++i) h.data()[i] *= mask.data()[i];
                }
            }
        }
        pooled_.assign(hyper_.hidden_dim, 0.0);
        for (int i = 0; i < n; ++i)
            for (int k = 0; k < hyper_.hidden_dim; ++k) pooled_[k] += h(i, k);
        for (double& v : pooled_) v /= n;

        const Matrix& fc_w = params_.at("fc.w").value;
        double logit = params_.at("fc.b").value(0, 0);
        for (int k = 0; k < hyper_.hidden_dim; ++k) logit += fc_w(0, k) * pooled_[k];
        nodes_ = n;
        has_forward_ = true;
        return logit;
    }

    void backward(double dlogit) {
        if (!has_forward_) throw std::logic_error("gcn: backward called before forward");
        const int n = nodes_;
        const int hd = hyper_.hidden_dim;

        Matrix& fc_w = params_.at("fc.w").value;
        Matrix& fc_w_grad = params_.at("fc.w").grad;
        params_.at("fc.b").grad(0, 0) += dlogit;
        for (int k = 0; k < hd; ++k) fc_w_grad(0, k) += dlogit * pooled_[k];

        // Mean pooling spreads the head gradient uniformly over nodes.
        Matrix dh(n, hd);
        for (int i = 0; i < n; ++i)
            for (int k = 0; k < hd; ++k) dh(i, k) = dlogit * fc_w(0, k) / n;

        for (int l = hyper_.layers - 1; l >= 0; --l) {
            if (l < hyper_.layers - 1) {
                const bool dropped = drop_mask_[l].size() > 0;
                for (std::size_t i = 0; i < dh.size(); ++i) {
                    if (dropped) dh.data()[i] *= drop_mask_[l].data()[i];
                    dh.data()[i] *= relu_mask_[l].data()[i];
                }
            }
            accumulate_at_b(mixed_[l], dh, params_.all()[l].grad);
            if (l > 0) {
                Matrix dmixed;
                matmul_bt_into(dh, params_.all()[l].value, dmixed);
                // dH_in = Âᵀ dMixed
                Matrix next(n, dmixed.cols());
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < n; ++j) {
                        const double a = a_hat_(j, i);
                        if (a == 0.0) continue;
                        const double* dmj = dmixed.row(j);
                        double* ni = next.row(i);
                        for (int k = 0; k < dmixed.cols(); ++k) ni[k] += a * dmj[k];
                    }
                dh = std::move(next);
            }
        }
    }

  private:
    GcnHyper hyper_;
    ParameterSet params_;
    Matrix a_hat_;
    std::vector<Matrix> mixed_, relu_mask_, drop_mask_;
    std::vector<double> pooled_;
    int nodes_ = 0;
    bool has_forward_ = false;
};

}  // namespace lachesis::nn
