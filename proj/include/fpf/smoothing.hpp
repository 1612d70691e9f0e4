#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fpf/fpf_iterate.hpp"
#include "fpf/geometry.hpp"

namespace fpf {

struct SupportPoint {
    std::vector<double> location;  // cell center
    double value = 0.0;            // composite density at the location
    std::size_t level = 0;
    /// Widths of the source cell; empty for a bare point.
    std::vector<double> extent;
};

/// One point per high-region leaf of every level, plus the final low-region
/// leaves, at the cell centers.
std::vector<SupportPoint> extract_support_points(const RegionChainResult& chain);

struct SurfaceOptions {
    /// Smallest noise standard deviation, in log-density units.
    double noise_floor = 1e-4;
    /// Larger noise levels tried alongside the floor when `select_noise` is set.
    std::vector<double> candidate_noise = {0.01, 0.03, 0.1, 0.3, 1.0};
    bool select_noise = true;
    /// Length scales in units of the domain width; empty selects them, with
    /// the noise level and trend order, by leave-one-out log predictive
    /// density over `candidate_scales`.
    std::vector<double> length_scales;
    std::vector<double> candidate_scales = {0.01, 0.0158, 0.0251, 0.0398, 0.0631, 0.1, 0.158,
                                            0.251, 0.398, 0.631, 1.0, 1.58, 2.51};
    std::size_t sweeps = 2;
    /// Polynomial orders of the mean function tried; an order is skipped
    /// when there are fewer than two points per coefficient.
    std::vector<std::size_t> trend_orders = {0, 1};
};

/// Monomials of the mean function up to `order` (0, 1 or 2): 1, u_a, then
/// u_a*u_b for a <= b.
std::vector<double> trend_basis(std::span<const double> u, std::size_t order);

/// Squared-exponential kernel regression of log-density around a
/// least-squares polynomial mean. A support value with a nonzero extent is
/// treated as the average of the surface over its cell.
class RegressionSurface {
public:
    RegressionSurface(Box domain, std::vector<std::vector<double>> locations, std::vector<std::vector<double>> extents,
                      std::vector<double> log_values, std::vector<double> length_scales, double signal_variance,
                      double noise, std::vector<double> trend, std::vector<double> coefficients);

    static RegressionSurface fit(std::span<const SupportPoint> points, const Box& domain,
                                 const SurfaceOptions& options = {});

    double log_density(std::span<const double> phi) const;
    std::vector<double> log_density_gradient(std::span<const double> phi) const;
    /// Average of the surface over the box centered at phi with the given widths.
    double cell_average(std::span<const double> phi, std::span<const double> extent) const;

    const Box& domain() const noexcept { return domain_; }
    const std::vector<std::vector<double>>& locations() const noexcept { return locations_; }
    const std::vector<std::vector<double>>& extents() const noexcept { return extents_; }
    const std::vector<double>& log_values() const noexcept { return log_values_; }
    const std::vector<double>& length_scales() const noexcept { return length_scales_; }
    double signal_variance() const noexcept { return signal_variance_; }
    /// Selected noise standard deviation (log units).
    double noise() const noexcept { return noise_; }
    /// Coefficients of the mean function over trend_basis, in normalized
    /// coordinates.
    const std::vector<double>& trend() const noexcept { return trend_; }
    std::size_t trend_order() const noexcept;
    const std::vector<double>& coefficients() const noexcept { return coefficients_; }
    /// Mean leave-one-out log predictive density at the selected hyperparameters.
    double loo_score = 0.0;

private:
    std::vector<double> normalized(std::span<const double> phi) const;

    Box domain_;
    std::vector<std::vector<double>> locations_;
    std::vector<std::vector<double>> extents_;
    std::vector<std::vector<double>> unit_centers_;
    std::vector<std::vector<double>> unit_widths_;
    std::vector<double> log_values_;
    std::vector<double> length_scales_;
    double signal_variance_ = 0.0;
    double noise_ = 0.0;
    std::vector<double> trend_;
    std::vector<double> coefficients_;
};

/// Leave-one-out residuals (log units) of the surface's own hyperparameters.
std::vector<double> loo_residuals(const RegressionSurface& surface);

/// exp(surface(phi)) * P(F) / p(phi); UndefinedQuery outside the domain.
double smoothed_fpf(const RegressionSurface& surface, double p_failure, double prior_density,
                    std::span<const double> phi);

struct FpfGradient {
    std::vector<double> value;
    bool on_boundary = false;
};

/// Analytic gradient of smoothed_fpf. Points on the domain boundary are
/// evaluated but flagged.
FpfGradient fpf_gradient(const RegressionSurface& surface, double p_failure, double prior_density,
                         std::span<const double> phi);

}  // namespace fpf
