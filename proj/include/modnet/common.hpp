#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace modnet {

// Error taxonomy. The CLI maps ConfigError to exit code 2 and everything
// else thrown after work has started to exit code 1.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
    using Error::Error;
};

struct NumericError : Error {
    using Error::Error;
};

struct StateError : Error {
    using Error::Error;
};

struct IndexError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

enum class Mode { Train, Infer };

// Detects any NaN/Inf in a buffer. A double accumulator cannot overflow on
// finite float inputs, so a non-finite sum implies a non-finite element.
template <typename T>
inline bool all_finite(const T* data, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(data[i]);
    if (std::isfinite(acc)) return true;
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(static_cast<double>(data[i]))) return false;
    }
    return true;
}

template <typename T>
inline std::size_t first_non_finite(const T* data, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(static_cast<double>(data[i]))) return i;
    }
    return n;
}

}  // namespace modnet
