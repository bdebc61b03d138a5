// Exception types shared across the library.
#pragma once

#include <stdexcept>
#include <string>

namespace dsla {

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Parse/format problems in dataset files; carries a line number when known.
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
    ParseError(const std::string& file, long line, const std::string& msg)
        : std::runtime_error(file + ":" + std::to_string(line) + ": " + msg) {}
};

struct LoadError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// No edges to delete and no node pair to add: the graph cannot be perturbed.
struct PerturbInfeasible : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Metric has no defined value on this input (single-class labels, zero rank variance, ...).
struct MetricUndefined : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

}  // namespace dsla
