#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fpf/benchmarks.hpp"
#include "fpf/bsp.hpp"
#include "fpf/design_opt.hpp"
#include "fpf/fpf_iterate.hpp"
#include "fpf/reliability.hpp"
#include "fpf/smoothing.hpp"

namespace fpf {

/// Shortest decimal text that parses back to the same double.
std::string format_double(double x);
/// Strict inverse of format_double; throws ArgumentError on trailing junk.
double parse_double(const std::string& text);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Column index by name; throws ArgumentError when absent.
    std::size_t column(const std::string& name) const;
};

/// Plain comma-separated text, no quoting; fields must not contain commas.
void write_csv(const std::filesystem::path& path, const CsvTable& table);
CsvTable read_csv(const std::filesystem::path& path);

/// Columns phi_*, z_*, theta_*, failed, performance, margin.
void write_samples(const std::filesystem::path& path, std::span<const AugmentedSample> samples,
                   std::size_t design_dim, std::size_t random_dim);
std::vector<AugmentedSample> read_samples(const std::filesystem::path& path);

/// Nested cut tree: every node has id, box, count, active and mass; internal
/// nodes add cut {axis, position, lower, upper}.
nlohmann::json partition_to_json(const PiecewiseConstantDensity& density);
PiecewiseConstantDensity partition_from_json(const nlohmann::json& doc);

nlohmann::json region_to_json(const RegionIndicator& region);
RegionIndicator region_from_json(const nlohmann::json& doc);

/// Columns phi_*, width_*, value, level.
void write_support_points(const std::filesystem::path& path, std::span<const SupportPoint> points);
std::vector<SupportPoint> read_support_points(const std::filesystem::path& path);

nlohmann::json surface_to_json(const RegressionSurface& surface);
RegressionSurface surface_from_json(const nlohmann::json& doc);

/// Columns phi_1..phi_n, pf_hat, n, cov; one row per grid point.
void write_oracle(const std::filesystem::path& path, const FpfGridOracle& oracle);
FpfGridOracle read_oracle(const std::filesystem::path& path);

struct OptimumRow {
    double allowable = 0.0;
    std::vector<double> phi;
    double objective = 0.0;
    double fpf = 0.0;
    bool active = false;
    bool feasible = true;
};

/// Columns allowable, phi_*, objective, fpf, active, feasible.
void write_optima(const std::filesystem::path& path, std::span<const OptimumRow> rows);
std::vector<OptimumRow> read_optima(const std::filesystem::path& path);

void write_json(const std::filesystem::path& path, const nlohmann::json& doc);
nlohmann::json read_json(const std::filesystem::path& path);

/// 64-bit FNV-1a of the file bytes, as 16 hex digits.
std::string file_checksum(const std::filesystem::path& path);

}  // namespace fpf
