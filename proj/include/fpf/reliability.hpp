#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fpf/geometry.hpp"
#include "fpf/random.hpp"
#include "fpf/stochastic_model.hpp"

namespace fpf {

enum class EstimateStatus { ok, no_failure };

struct FailureEstimate {
    double p_hat = 0.0;
    std::uint64_t n_evals = 0;
    std::vector<AugmentedSample> failure_samples;
    double cov = 0.0;
    EstimateStatus status = EstimateStatus::ok;
    std::vector<double> level_thresholds;  // subset simulation only
};

/// Membership in D_k: either the whole design box or a union of disjoint
/// partition cells (half-open, closed on the domain's upper faces).
class RegionIndicator {
public:
    RegionIndicator() = default;
    static RegionIndicator whole(Box domain);
    static RegionIndicator cells(Box domain, std::vector<Box> boxes);

    bool contains(std::span<const double> phi) const;
    bool is_whole() const noexcept { return whole_; }
    const Box& domain() const noexcept { return domain_; }
    const std::vector<Box>& boxes() const noexcept { return boxes_; }
    double volume() const;
    /// Smallest box containing every member cell.
    Box bounding_box() const;

private:
    RegionIndicator(Box domain, std::vector<Box> boxes, bool whole)
        : domain_(std::move(domain)), boxes_(std::move(boxes)), whole_(whole) {}

    Box domain_;
    std::vector<Box> boxes_;
    bool whole_ = true;
};

FailureEstimate direct_mcs(const StochasticModel& model, const LimitStateModel& lsm, std::size_t n,
                           RandomStream& stream);

struct SubsetOptions {
    std::size_t n_per_level = 1000;
    double p0 = 0.1;
    std::size_t max_levels = 10;
};

/// Subset simulation in the augmented (phi, z) space with MMH conditional
/// sampling between intermediate margin levels.
FailureEstimate subset_simulation(const StochasticModel& model, const LimitStateModel& lsm,
                                  const SubsetOptions& options, RandomStream& stream);

/// Half-widths of the uniform random-walk proposal per coordinate.
struct ProposalScales {
    std::vector<double> phi;
    std::vector<double> z;
};

/// Seed standard deviation per coordinate times `factor`. Zero-spread
/// coordinates fall back to a tenth of the region's bounding width (phi) or 1 (z).
ProposalScales seed_scales(std::span<const AugmentedSample> seeds, const RegionIndicator& region, double factor);

struct ChainStats {
    std::size_t steps = 0;
    std::size_t accepted = 0;
    std::uint64_t evaluations = 0;
    double acceptance_rate = 0.0;
    /// Largest per-coordinate standard deviation of the emitted states,
    /// relative to the proposal half-width.
    double diversity = 0.0;
    bool stuck = false;
};

struct Chain {
    std::vector<AugmentedSample> states;
    ChainStats stats;
};

/// Modified Metropolis-Hastings chain targeting p(phi, theta | F, phi in region).
/// Emits n_steps states after the seed (the seed itself is not emitted).
Chain mmh_chain(const AugmentedSample& seed, const RegionIndicator& region, const StochasticModel& model,
                const LimitStateModel& lsm, const ProposalScales& scales, std::size_t n_steps, RandomStream& stream);

struct PopulateOptions {
    std::size_t n_target = 0;
    std::size_t burn_in = 10;
    std::size_t max_chains = 100;
    double scale_factor = 1.0;
    unsigned threads = 1;
};

struct Population {
    std::vector<AugmentedSample> samples;
    std::size_t seeds = 0;
    std::size_t chains = 0;
    std::uint64_t evaluations = 0;
    double acceptance_rate = 0.0;
    std::size_t stuck_chains = 0;
};

/// Grows the in-region subset of `prev` to at least n_target failed samples.
/// Seeds are kept; chains start from evenly strided seeds and take steps in
/// round-robin order after their burn-in.
Population populate_region(std::span<const AugmentedSample> prev, const RegionIndicator& region,
                           const StochasticModel& model, const LimitStateModel& lsm, const PopulateOptions& options,
                           const RandomStream& stream);

/// Evaluation budget of populate_region for a given seed count.
std::uint64_t populate_cost_bound(std::size_t seeds, const PopulateOptions& options);

}  // namespace fpf
