#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace fpf {

/// Invalid run configuration or unresolvable model specification.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// An operation was called with arguments violating its precondition.
class ArgumentError : public std::invalid_argument {
public:
    explicit ArgumentError(const std::string& what) : std::invalid_argument(what) {}
};

/// Density threshold cannot separate a low-density region.
class DegenerateThreshold : public std::runtime_error {
public:
    explicit DegenerateThreshold(const std::string& what) : std::runtime_error(what) {}
};

/// Region population could not start (no seed inside the region).
class PopulationError : public std::runtime_error {
public:
    explicit PopulationError(const std::string& what) : std::runtime_error(what) {}
};

/// Subset simulation ran out of levels before reaching the failure domain.
class LevelsExceeded : public std::runtime_error {
public:
    LevelsExceeded(const std::string& what, std::vector<double> thresholds)
        : std::runtime_error(what), thresholds_(std::move(thresholds)) {}
    const std::vector<double>& thresholds() const noexcept { return thresholds_; }

private:
    std::vector<double> thresholds_;
};

/// Query outside the support of the design prior.
class UndefinedQuery : public std::domain_error {
public:
    explicit UndefinedQuery(const std::string& what) : std::domain_error(what) {}
};

/// Regression fit failure (e.g. conflicting duplicate support points).
class FitError : public std::runtime_error {
public:
    explicit FitError(const std::string& what) : std::runtime_error(what) {}
};

/// No feasible design found; carries the least-violating point.
class Infeasible : public std::runtime_error {
public:
    Infeasible(const std::string& what, std::vector<double> best, double violation)
        : std::runtime_error(what), best_(std::move(best)), violation_(violation) {}
    const std::vector<double>& least_violating() const noexcept { return best_; }
    double violation() const noexcept { return violation_; }

private:
    std::vector<double> best_;
    double violation_;
};

}  // namespace fpf
