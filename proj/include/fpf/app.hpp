#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fpf/artifacts.hpp"
#include "fpf/run_config.hpp"

namespace fpf {

inline constexpr const char* kVersion = "fpfopt 0.1.0";

enum ExitCode : int { exit_ok = 0, exit_validation = 2, exit_pipeline = 3, exit_comparison = 4 };

struct RunResult {
    std::shared_ptr<RegionChainResult> chain;
    std::optional<RegressionSurface> surface;
    std::vector<OptimumRow> optima;
    std::uint64_t model_evaluations = 0;
    std::filesystem::path directory;
};

/// Pipeline, smoothing and optimization for every allowable, with all
/// artifacts and the manifest written under config.output.directory. On a
/// pipeline or fit abort the completed levels and a manifest with status
/// "aborted" are written before the PipelineError / FitError propagates.
RunResult execute_run(const RunConfig& config);

/// Direct Monte Carlo grid oracle, or the analytic toy FPF when `analytic`
/// is set (n = 0, cov = 0 in that case).
FpfGridOracle build_oracle(const RunConfig& config, std::size_t resolution, std::size_t per_point, bool analytic);

/// Oracle and run do not cover the same design space.
class GridMismatch : public std::runtime_error {
public:
    explicit GridMismatch(const std::string& what) : std::runtime_error(what) {}
};

struct ComparisonPoint {
    std::vector<double> phi;
    double oracle = 0.0;
    double estimate = 0.0;
    double log10_ratio = 0.0;
    bool scored = false;
    bool within = false;
};

struct ComparisonReport {
    std::vector<ComparisonPoint> points;
    std::size_t scored = 0;
    std::size_t within = 0;
    double fraction = 0.0;  // within / scored
    double median_abs = 0.0;
    double q90_abs = 0.0;
    double max_abs = 0.0;
    double tolerance_log10 = 0.0;
    double min_probability = 0.0;
    double pass_fraction = 0.0;
    bool passed = false;

    std::string summary() const;
};

/// Smoothed FPF of a finished run against an oracle table; tolerances come
/// from the run's manifest. Throws GridMismatch naming the differing bounds.
ComparisonReport compare_run(const std::filesystem::path& run_directory, const FpfGridOracle& oracle);

/// Writes compare.csv and compare_summary.txt into `directory`.
void write_comparison(const std::filesystem::path& directory, const ComparisonReport& report);

/// Command-line entry point; returns an ExitCode.
int run_cli(int argc, char** argv);

}  // namespace fpf
