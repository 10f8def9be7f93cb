#pragma once

#include <cmath>

#include "lachesis/errors.hpp"

namespace lachesis::nn {

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// log(1 + e^x) without overflow for large |x|.
inline double softplus(double x) {
    return (x > 0.0 ? x : 0.0) + std::log1p(std::exp(-std::fabs(x)));
}

// Binary cross-entropy of sigmoid(logit) against a boolean label,
// evaluated as softplus(logit) - label*logit for stability.
inline double bce_loss(double logit, bool label) {
    if (!std::isfinite(logit)) throw NumericError("bce_loss: non-finite logit");
    return softplus(logit) - (label ? logit : 0.0);
}

// d loss / d logit
inline double bce_dlogit(double logit, bool label) {
    return sigmoid(logit) - (label ? 1.0 : 0.0);
}

}  // namespace lachesis::nn
