#pragma once

#include <stdexcept>
#include <string>

namespace lachesis {

// Validation failures in trace data. CLI maps these to exit code 1.
struct TraceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad configuration: unknown scheme, incompatible model/representation,
// out-of-range settings. CLI maps these to exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Numeric failures: non-finite gradients or parameters, failed gradient
// checks. CLI maps these to exit code 3.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ROC-AUC is undefined when only one class is present.
struct SingleClassError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A graph with zero nodes cannot be pooled; the experiment harness scores
// such bugs as predicted-incorrect instead of feeding them to the model.
struct DegenerateGraphError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace lachesis
