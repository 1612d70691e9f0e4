#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fpf/stochastic_model.hpp"

namespace fpf {

/// Fundamental bending mode coefficient of a clamped-free beam.
inline constexpr double kCantileverLambda1 = 1.8751040687;

/// Random vector of the box beam, in the order [b, h, t, rho, E].
/// Units: mm, mm, mm, kg/m^3, GPa.
struct BeamSection {
    double b, h, t, rho, e;
};

/// Euler-Bernoulli first natural frequency (rad/s) of a hollow box cantilever.
/// Throws ArgumentError for non-positive inputs or walls thicker than half
/// the section.
double beam_frequency(const BeamSection& s, double length_mm);

/// Failure when the first natural frequency lies inside the closed band.
class BoxBeamModel : public LimitStateModel {
public:
    BoxBeamModel(double length_mm = 500.0, double band_lo = 550.0, double band_hi = 600.0);

    bool beam_failure(std::span<const double> theta) const;
    bool admissible(std::span<const double> phi, std::span<const double> theta) const override;
    std::string name() const override { return "beam"; }

    double length() const noexcept { return length_; }
    double band_lo() const noexcept { return lo_; }
    double band_hi() const noexcept { return hi_; }

protected:
    Evaluation do_evaluate(std::span<const double> phi, std::span<const double> theta) const override;

private:
    double length_, lo_, hi_;
};

/// Design space [30, 50]^2 and random variables [b, h, t, rho, E].
StochasticModel beam_stochastic_model();

/// One design variable phi in [0, 4], one standard normal theta; failure iff
/// theta >= phi, so the failure probability function is Phi(-phi).
class ToyModel : public LimitStateModel {
public:
    std::string name() const override { return "toy"; }

protected:
    Evaluation do_evaluate(std::span<const double> phi, std::span<const double> theta) const override;
};

StochasticModel toy_stochastic_model();

/// Standard normal upper tail Phi(-phi).
double toy_analytic_fpf(double phi);

/// g = c0 + a . phi + b . theta, failure iff g <= 0.
class LinearModel : public LimitStateModel {
public:
    LinearModel(double intercept, std::vector<double> design_coefficients, std::vector<double> random_coefficients);
    std::string name() const override { return "linear"; }

protected:
    Evaluation do_evaluate(std::span<const double> phi, std::span<const double> theta) const override;

private:
    double intercept_;
    std::vector<double> a_, b_;
};

struct GridPoint {
    std::vector<double> phi;
    double pf_hat = 0.0;
    std::size_t n = 0;
    double cov = 0.0;
};

struct FpfGridOracle {
    std::size_t resolution = 0;
    std::vector<GridPoint> points;  // first coordinate varies slowest
    std::uint64_t total_evaluations = 0;
};

/// Regular grid including the design-space corners.
std::vector<std::vector<double>> design_grid(const DesignSpace& space, std::size_t resolution);

/// Direct Monte Carlo at every grid point; point i uses stream child i of
/// the oracle stage, so results do not depend on the thread count.
FpfGridOracle grid_dmcs_oracle(const StochasticModel& model, const LimitStateModel& lsm, std::size_t resolution,
                               std::size_t n_per_point, std::uint64_t seed, unsigned threads = 1);

}  // namespace fpf
