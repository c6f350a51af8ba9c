#pragma once

#include <stdexcept>

namespace fdepr {

/// Malformed configuration or data file. The CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Numerical failure during a computation (non-convergence, fit breakdown).
/// The CLI maps this to exit code 3.
struct ComputeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace fdepr
