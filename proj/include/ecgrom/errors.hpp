#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace ecgrom {

/// Invalid configuration or input data. The CLI maps it to exit code 2.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Solver breakdown, non-convergence or non-finite values. Exit code 3.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what, std::vector<double> history = {})
        : std::runtime_error(what), residual_history_(std::move(history)) {}

    const std::vector<double>& residual_history() const noexcept { return residual_history_; }

private:
    std::vector<double> residual_history_;
};

} // namespace ecgrom
