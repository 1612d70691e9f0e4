#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fpf/bsp.hpp"
#include "fpf/reliability.hpp"
#include "fpf/stochastic_model.hpp"

namespace fpf {

struct Threshold {
    double density = 0.0;         // p_k*
    double realized_ratio = 0.0;  // P_k*, mass of the leaves below p_k*
};

/// Sorts active leaves by density and accumulates mass until it first reaches
/// `ratio`; leaves tied with the last accumulated one are included too. The
/// threshold is the density of the first excluded leaf.
Threshold threshold_from_ratio(const PiecewiseConstantDensity& d, double ratio);

struct RegionSplit {
    RegionIndicator high;  // S_{k+1}
    RegionIndicator low;   // D_{k+1}
    std::vector<int> high_leaves;
    std::vector<int> low_leaves;
};

/// Active leaves with density < threshold form the low region, the rest the
/// high region.
RegionSplit split_region(const PiecewiseConstantDensity& d, double threshold);

/// P(D_0|F) = 1, P(D_k|F) = product of the first k ratios.
std::vector<double> level_weights(std::span<const double> ratios);

struct PartitionLevel {
    PartitionLevel(std::size_t index, RegionIndicator d, PiecewiseConstantDensity estimate)
        : k(index), region(std::move(d)), density(std::move(estimate)) {}

    std::size_t k = 0;
    RegionIndicator region;
    PiecewiseConstantDensity density;
    Threshold threshold;
    RegionSplit split;
    double weight = 1.0;  // P(D_k|F)
    std::vector<AugmentedSample> samples;
    std::uint64_t evaluations = 0;
    std::size_t seeds = 0;
    double acceptance_rate = 0.0;
};

enum class StopReason { floor_reached, iteration_cap };

struct RegionChainResult {
    std::vector<PartitionLevel> levels;
    FailureEstimate pilot;
    double p_failure = 0.0;   // P(F) of the augmented system
    double prior_density = 0.0;  // p(phi), constant on the design space
    Box domain;
    StopReason stop = StopReason::floor_reached;

    std::size_t iterations() const { return levels.empty() ? 0 : levels.size() - 1; }
    std::vector<double> weights() const;
};

/// Deepest level k with phi in D_k, times that level's weight; 0 outside D_0.
double compose_density(const RegionChainResult& chain, std::span<const double> phi);

/// Cell-sum integral of the composite density.
double composite_integral(const RegionChainResult& chain);

/// density * P(F) / p(phi). Throws UndefinedQuery when p(phi) = 0.
double scale_to_fpf(double density, double p_failure, double prior_density);

/// Piecewise FPF over a completed chain.
class FpfApproximation {
public:
    explicit FpfApproximation(std::shared_ptr<const RegionChainResult> chain) : chain_(std::move(chain)) {}
    double operator()(std::span<const double> phi) const;
    const RegionChainResult& chain() const { return *chain_; }

private:
    std::shared_ptr<const RegionChainResult> chain_;
};

enum class PilotEngine { dmcs, subset };

struct PipelineOptions {
    PilotEngine pilot_engine = PilotEngine::dmcs;
    std::size_t pilot_samples = 9000;
    SubsetOptions subset;
    std::size_t iteration_budget = 9000;
    double ratio = 0.1;
    std::size_t max_iterations = 3;
    double stop_floor = 1e-4;
    std::size_t burn_in = 10;
    std::size_t max_chains = 100;
    double proposal_scale = 1.0;
    BspOptions bsp;
    unsigned threads = 1;
};

/// Aborted pipeline; the levels completed so far are preserved.
class PipelineError : public std::runtime_error {
public:
    PipelineError(const std::string& what, std::shared_ptr<RegionChainResult> partial)
        : std::runtime_error(what), partial_(std::move(partial)) {}
    const RegionChainResult& partial() const { return *partial_; }

private:
    std::shared_ptr<RegionChainResult> partial_;
};

/// FPF value of the current threshold: p_k* P(D_k|F) P(F) / p(phi).
double threshold_fpf_level(const PartitionLevel& level, double p_failure, double prior_density);

/// Pilot, then threshold / split / populate / re-estimate until the
/// threshold's FPF level drops below the floor or the iteration cap is hit.
std::shared_ptr<RegionChainResult> run_pipeline(const PipelineOptions& options, const StochasticModel& model,
                                                const LimitStateModel& lsm, std::uint64_t seed);

}  // namespace fpf
