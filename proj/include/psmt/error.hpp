#pragma once

#include <stdexcept>
#include <string>

namespace psmt {

// Invalid configuration, shape mismatch, or out-of-range hyperparameter.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Missing/corrupt files, unwritable directories.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// NaN/Inf encountered during a numeric procedure.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace psmt
