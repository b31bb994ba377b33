#pragma once

#include <stdexcept>

namespace sslcal {

// Bad hyperparameters, mismatched dimensions, invalid presets or config keys.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed runtime inputs: empty batches, ragged CSV rows, degenerate vectors.
struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Operations invoked in an impossible order (e.g. backward without forward).
struct StateError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace sslcal
