#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "fpf/geometry.hpp"
#include "fpf/random.hpp"

namespace fpf {

using ScalarField = std::function<double(std::span<const double>)>;

/// minimize objective(phi) over `bounds` subject to failure_probability(phi) <= allowable.
struct DesignProblem {
    ScalarField objective;
    ScalarField failure_probability;
    double allowable = 0.01;
    Box bounds;
};

struct TraceEntry {
    std::size_t start = 0;
    std::vector<double> phi;
    double objective = 0.0;
    double constraint = 0.0;
    bool feasible = false;
};

struct OptimalDesign {
    std::vector<double> phi;
    double objective = 0.0;
    double constraint = 0.0;
    bool active = false;
    std::vector<TraceEntry> trace;  // best point of every start
};

struct OptimizeOptions {
    std::size_t grid_per_dim = 3;
    std::size_t random_starts = 4;
    std::size_t max_evaluations = 3000;
    double tolerance = 1e-10;
    double penalty = 1e4;
};

/// Multistart Nelder-Mead on an exact log-violation penalty, followed by a
/// bisection repair onto the feasible side. Throws Infeasible when no start
/// finds a point with constraint <= allowable (1 + 1e-6).
OptimalDesign optimize(const DesignProblem& problem, const OptimizeOptions& options, RandomStream& stream);

/// Mean cross-sectional area b h - (b - 2t)(h - 2t) of a hollow box section.
double objective_mean_area(std::span<const double> phi, double mean_thickness = 2.0);

}  // namespace fpf
