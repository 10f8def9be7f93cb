#pragma once

#include <cmath>
#include <deque>
#include <string>
#include <vector>

#include "lachesis/errors.hpp"
#include "lachesis/nn/matrix.hpp"
#include "lachesis/rng.hpp"

namespace lachesis::nn {

// One named parameter with its gradient and Adam moment buffers, all
// shape-locked to the value.
struct Parameter {
    std::string name;
    Matrix value;
    Matrix grad;
    Matrix m;  // first moment
    Matrix v;  // second moment
};

class ParameterSet {
  public:
    // Deque storage keeps references from add() valid across later adds.
    Parameter& add(std::string name, int rows, int cols) {
        params_.push_back({std::move(name), Matrix(rows, cols), Matrix(rows, cols),
                           Matrix(rows, cols), Matrix(rows, cols)});
        return params_.back();
    }

    std::deque<Parameter>& all() { return params_; }
    const std::deque<Parameter>& all() const { return params_; }

    Parameter& at(const std::string& name) {
        for (Parameter& p : params_)
            if (p.name == name) return p;
        throw ConfigError("no parameter named '" + name + "'");
    }

    void zero_grads() {
        for (Parameter& p : params_) p.grad.fill(0.0);
    }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const Parameter& p : params_) n += p.value.size();
        return n;
    }

  private:
    std::deque<Parameter> params_;
};

inline void glorot_uniform(Matrix& w, int fan_in, int fan_out, SplitMix64& rng) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (std::size_t i = 0; i < w.size(); ++i)
        w.data()[i] = rng.next_uniform(-limit, limit);
}

// Fills mask entries with 0 or 1/(1-p) (inverted dropout, identity in
// expectation). p = 0 leaves everything at exactly 1.
inline void dropout_mask(Matrix& mask, double p, SplitMix64& rng) {
    if (p <= 0.0) {
        mask.fill(1.0);
        return;
    }
    const double scale = 1.0 / (1.0 - p);
    for (std::size_t i = 0; i < mask.size(); ++i)
        mask.data()[i] = rng.next_double() < p ? 0.0 : scale;
}

}  // namespace lachesis::nn
