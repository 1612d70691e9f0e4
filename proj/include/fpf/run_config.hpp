#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fpf/design_opt.hpp"
#include "fpf/fpf_iterate.hpp"
#include "fpf/smoothing.hpp"
#include "fpf/stochastic_model.hpp"

namespace fpf {

struct ModelConfig {
    std::string type = "beam";  // beam | toy | linear
    // beam
    double length = 500.0;
    double band_lo = 550.0;
    double band_hi = 600.0;
    // linear: g = intercept + a . phi + b . theta
    double intercept = 0.0;
    std::vector<double> design_coefficients;
    std::vector<double> random_coefficients;
};

struct OptimizationConfig {
    std::vector<double> allowable = {1e-2, 1e-3, 1e-4};
    std::string objective = "mean_area";  // mean_area | linear
    double mean_thickness = 2.0;
    std::vector<double> coefficients;     // linear objective
    OptimizeOptions solver;
};

struct OutputConfig {
    std::filesystem::path directory = "run";
    std::size_t grid_resolution = 21;
};

struct CompareConfig {
    double tolerance_log10 = 0.3;
    double min_probability = 1e-4;  // points below this oracle value are not scored
    double pass_fraction = 0.9;
};

struct RunConfig {
    ModelConfig model;
    std::vector<double> lower;
    std::vector<double> upper;
    std::vector<std::string> names;
    std::vector<RandomVariableSpec> random_variables;
    PipelineOptions pipeline;
    SurfaceOptions smoother;
    OptimizationConfig optimization;
    OutputConfig output;
    CompareConfig compare;
    std::uint64_t seed = 1;
};

/// Parses and validates a configuration document. Missing fields take their
/// defaults; beam and toy models supply their own design space and random
/// variables when those are absent. Errors are ConfigError with the
/// offending field path.
RunConfig parse_config(const nlohmann::json& doc);
RunConfig load_config(const std::filesystem::path& path);

/// Fully expanded document; parse_config(to_json(c)) reproduces c.
nlohmann::json to_json(const RunConfig& config);

StochasticModel build_stochastic_model(const RunConfig& config);
std::unique_ptr<LimitStateModel> build_limit_state(const RunConfig& config);
ScalarField build_objective(const RunConfig& config);

}  // namespace fpf
