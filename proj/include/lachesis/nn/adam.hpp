#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "lachesis/errors.hpp"
#include "lachesis/nn/params.hpp"

namespace lachesis::nn {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// One Adam update with bias correction; t is the 1-based step index.
// Rejects non-finite gradients naming the parameter, and verifies the
// updated values stayed finite.
inline void adam_step(ParameterSet& params, const AdamConfig& cfg, std::int64_t t) {
    if (t < 1) throw ConfigError("adam_step: step index must be >= 1");
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (Parameter& p : params.all()) {
        double* value = p.value.data();
        double* grad = p.grad.data();
        double* m = p.m.data();
        double* v = p.v.data();
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double g = grad[i];
            if (!std::isfinite(g))
                throw NumericError("non-finite gradient in parameter '" + p.name + "'");
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            value[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
            if (!std::isfinite(value[i]))
                throw NumericError("non-finite value in parameter '" + p.name +
                                   "' after update");
        }
    }
}

}  // namespace lachesis::nn
