#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sdebf {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

// A simulated state became non-finite (or left the domain of the diffusion).
class SimulationDiverged : public Error {
public:
    SimulationDiverged(std::size_t step, const std::string& what)
        : Error("simulation diverged at step " + std::to_string(step) + ": " + what), step_(step) {}

    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

// Covariate column with zero empirical variance.
class DegenerateCovariate : public Error {
public:
    explicit DegenerateCovariate(std::size_t column)
        : Error("covariate column " + std::to_string(column) + " has zero variance"),
          column_(column) {}

    std::size_t column() const noexcept { return column_; }

private:
    std::size_t column_;
};

// |sigma(x)| fell below the floor inside a likelihood evaluation.
class DiffusionDegenerate : public Error {
public:
    DiffusionDegenerate(std::size_t step, double x)
        : Error("diffusion below floor at step " + std::to_string(step) +
                " (x = " + std::to_string(x) + ")"),
          step_(step), x_(x) {}

    std::size_t step() const noexcept { return step_; }
    double state() const noexcept { return x_; }

private:
    std::size_t step_;
    double x_;
};

// Every Monte-Carlo log-weight was -inf (or NaN).
class NumericalUnderflow : public Error {
public:
    explicit NumericalUnderflow(double max_log_weight)
        : Error("all Monte-Carlo weights underflow (max log-weight " +
                std::to_string(max_log_weight) + ")"),
          max_log_weight_(max_log_weight) {}

    double max_log_weight() const noexcept { return max_log_weight_; }

private:
    double max_log_weight_;
};

class ParseError : public Error {
public:
    ParseError(std::size_t row, const std::string& what)
        : Error(row == 0 ? what : "row " + std::to_string(row) + ": " + what), row_(row) {}

    // 1-based data row (0 when the error is not tied to a row).
    std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_;
};

class ConfigError : public Error {
public:
    ConfigError(const std::string& key, const std::string& what)
        : Error("config key '" + key + "': " + what), key_(key) {}

    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

// File could not be written or a directory could not be created.
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace sdebf
