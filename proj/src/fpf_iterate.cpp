#include "fpf/fpf_iterate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "fpf/errors.hpp"

namespace fpf {

Threshold threshold_from_ratio(const PiecewiseConstantDensity& d, double ratio) {
    if (!(ratio > 0.0 && ratio < 1.0)) throw ArgumentError(fmt::format("probability ratio {} not in (0, 1)", ratio));
    auto leaves = d.partition().active_leaves();
    std::stable_sort(leaves.begin(), leaves.end(),
                     [&](int a, int b) { return d.leaf_density(a) < d.leaf_density(b); });
    double accumulated = 0.0;
    std::size_t i = 0;
    while (i < leaves.size() && accumulated < ratio - 1e-12) accumulated += d.mass(leaves[i++]);
    while (i > 0 && i < leaves.size() && d.leaf_density(leaves[i]) == d.leaf_density(leaves[i - 1])) {
        accumulated += d.mass(leaves[i++]);
    }
    if (i >= leaves.size()) {
        throw DegenerateThreshold(fmt::format("no leaf density separates a low region of mass {}", ratio));
    }
    return {d.leaf_density(leaves[i]), accumulated};
}

RegionSplit split_region(const PiecewiseConstantDensity& d, double threshold) {
    const auto& part = d.partition();
    RegionSplit out;
    std::vector<Box> high, low;
    for (int i : part.active_leaves()) {
        if (d.leaf_density(i) < threshold) {
            out.low_leaves.push_back(i);
            low.push_back(part.node(i).box);
        } else {
            out.high_leaves.push_back(i);
            high.push_back(part.node(i).box);
        }
    }
    if (low.empty()) throw DegenerateThreshold(fmt::format("threshold {} is below every leaf density", threshold));
    if (high.empty()) throw DegenerateThreshold(fmt::format("threshold {} is above every leaf density", threshold));
    out.high = RegionIndicator::cells(part.domain(), std::move(high));
    out.low = RegionIndicator::cells(part.domain(), std::move(low));
    return out;
}

std::vector<double> level_weights(std::span<const double> ratios) {
    std::vector<double> w{1.0};
    for (double r : ratios) w.push_back(w.back() * r);
    return w;
}

std::vector<double> RegionChainResult::weights() const {
    std::vector<double> w;
    for (const auto& l : levels) w.push_back(l.weight);
    return w;
}

double compose_density(const RegionChainResult& chain, std::span<const double> phi) {
    for (auto it = chain.levels.rbegin(); it != chain.levels.rend(); ++it) {
        if (it->region.contains(phi)) return it->density(phi) * it->weight;
    }
    return 0.0;
}

double composite_integral(const RegionChainResult& chain) {
    double total = 0.0;
    for (std::size_t k = 0; k < chain.levels.size(); ++k) {
        const auto& level = chain.levels[k];
        for (int i : level.split.high_leaves) total += level.weight * level.density.mass(i);
        if (k + 1 == chain.levels.size()) {
            for (int i : level.split.low_leaves) total += level.weight * level.density.mass(i);
        }
    }
    return total;
}

double scale_to_fpf(double density, double p_failure, double prior_density) {
    if (!(prior_density > 0.0)) throw UndefinedQuery("failure probability queried outside the design space");
    return density * p_failure / prior_density;
}

double FpfApproximation::operator()(std::span<const double> phi) const {
    const double prior = chain_->domain.contains(phi) ? chain_->prior_density : 0.0;
    return scale_to_fpf(compose_density(*chain_, phi), chain_->p_failure, prior);
}

double threshold_fpf_level(const PartitionLevel& level, double p_failure, double prior_density) {
    return level.threshold.density * level.weight * p_failure / prior_density;
}

namespace {

PointSet design_points(const std::vector<AugmentedSample>& samples, std::size_t dim) {
    PointSet pts(dim);
    pts.reserve(samples.size());
    for (const auto& s : samples) pts.push_back(s.phi);
    return pts;
}

void check_normalization(const PiecewiseConstantDensity& d, std::size_t k) {
    if (std::abs(d.total_mass() - 1.0) > 1e-12 || std::abs(d.integral() - 1.0) > 1e-12) {
        throw std::logic_error(fmt::format("level {} density does not integrate to one", k));
    }
}

}  // namespace

std::shared_ptr<RegionChainResult> run_pipeline(const PipelineOptions& options, const StochasticModel& model,
                                                const LimitStateModel& lsm, std::uint64_t seed) {
    if (!(options.ratio > 0.0 && options.ratio < 1.0)) throw ArgumentError("probability ratio must lie in (0, 1)");
    if (!(options.stop_floor > 0.0 && options.stop_floor < 1.0)) throw ArgumentError("stop floor must lie in (0, 1)");

    auto chain = std::make_shared<RegionChainResult>();
    const DesignSpace& space = model.space();
    const std::size_t dim = space.dimension();
    chain->domain = space.box();
    chain->prior_density = 1.0 / space.volume();
    const std::uint64_t evals_before = lsm.evaluations();

    RandomStream pilot_stream = RandomStream::for_stage(seed, Stage::pilot);
    FailureEstimate pilot;
    if (options.pilot_engine == PilotEngine::dmcs) {
        pilot = direct_mcs(model, lsm, options.pilot_samples, pilot_stream);
    }
    if (options.pilot_engine == PilotEngine::subset || pilot.status == EstimateStatus::no_failure) {
        const std::uint64_t spent = pilot.n_evals;
        RandomStream ss_stream = pilot_stream.child(1);
        try {
            pilot = subset_simulation(model, lsm, options.subset, ss_stream);
        } catch (const LevelsExceeded& e) {
            throw PipelineError(e.what(), chain);
        }
        pilot.n_evals += spent;
    }
    if (pilot.failure_samples.empty()) throw PipelineError("pilot run produced no failure samples", chain);
    chain->p_failure = pilot.p_hat;

    const RandomStream partition_stream = RandomStream::for_stage(seed, Stage::partition);
    const RandomStream populate_stream = RandomStream::for_stage(seed, Stage::populate);

    std::vector<AugmentedSample> samples = pilot.failure_samples;
    chain->pilot = std::move(pilot);
    RegionIndicator region = RegionIndicator::whole(space.box());
    BinaryPartition initial(space.box());
    std::uint64_t stage_evals = chain->pilot.n_evals;
    std::size_t seeds = 0;
    double acceptance = 0.0;
    double weight = 1.0;

    for (std::size_t k = 0;; ++k) {
        const PointSet pts = design_points(samples, dim);
        RandomStream rs = partition_stream.child(k);
        PiecewiseConstantDensity density = bsp_refine(pts, initial, options.bsp, rs);
        check_normalization(density, k);

        PartitionLevel level(k, region, std::move(density));
        level.weight = weight;
        level.evaluations = stage_evals;
        level.seeds = seeds;
        level.acceptance_rate = acceptance;
        try {
            level.threshold = threshold_from_ratio(level.density, options.ratio);
            level.split = split_region(level.density, level.threshold.density);
        } catch (const DegenerateThreshold& e) {
            level.samples = std::move(samples);
            chain->levels.push_back(std::move(level));
            throw PipelineError(fmt::format("level {}: {}", k, e.what()), chain);
        }
        level.samples = std::move(samples);
        chain->levels.push_back(std::move(level));
        const PartitionLevel& cur = chain->levels.back();

        if (threshold_fpf_level(cur, chain->p_failure, chain->prior_density) < options.stop_floor) {
            chain->stop = StopReason::floor_reached;
            break;
        }
        if (k >= options.max_iterations) {
            chain->stop = StopReason::iteration_cap;
            break;
        }

        // Next level: freeze the high cells and grow samples in the low region.
        initial = cur.density.partition();
        for (int i : cur.split.high_leaves) initial.set_active(i, false);
        region = cur.split.low;
        weight = cur.weight * cur.threshold.realized_ratio;

        seeds = static_cast<std::size_t>(std::count_if(cur.samples.begin(), cur.samples.end(), [&](const auto& s) {
            return s.failed && region.contains(s.phi);
        }));
        PopulateOptions pop;
        pop.burn_in = options.burn_in;
        pop.max_chains = options.max_chains;
        pop.scale_factor = options.proposal_scale;
        pop.threads = options.threads;
        const std::size_t chains = std::min(seeds, options.max_chains);
        const std::size_t overhead = chains * options.burn_in;
        pop.n_target = seeds + (options.iteration_budget > overhead ? options.iteration_budget - overhead : 0);
        Population grown;
        try {
            grown = populate_region(cur.samples, region, model, lsm, pop, populate_stream.child(k + 1));
        } catch (const PopulationError& e) {
            throw PipelineError(fmt::format("level {}: {}", k + 1, e.what()), chain);
        }
        samples = std::move(grown.samples);
        stage_evals = grown.evaluations;
        acceptance = grown.acceptance_rate;
    }

    if (std::abs(composite_integral(*chain) - 1.0) > 1e-10) {
        throw std::logic_error("composite density does not integrate to one");
    }
    std::uint64_t total = 0;
    for (const auto& l : chain->levels) total += l.evaluations;
    if (total != lsm.evaluations() - evals_before) {
        throw std::logic_error("stage evaluation counts do not match the model counter");
    }
    const FpfApproximation fpf(chain);
    for (const auto& s : chain->pilot.failure_samples) {
        const double v = fpf(s.phi);
        if (!(v > 0.0 && v <= 1.05)) {
            throw PipelineError(fmt::format("piecewise failure probability {} at a pilot sample is outside (0, 1.05]", v),
                                chain);
        }
    }
    return chain;
}

}  // namespace fpf
