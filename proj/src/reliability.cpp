#include "fpf/reliability.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include <fmt/format.h>

#include "fpf/errors.hpp"

namespace fpf {

RegionIndicator RegionIndicator::whole(Box domain) { return RegionIndicator(std::move(domain), {}, true); }

RegionIndicator RegionIndicator::cells(Box domain, std::vector<Box> boxes) {
    return RegionIndicator(std::move(domain), std::move(boxes), false);
}

bool RegionIndicator::contains(std::span<const double> phi) const {
    if (whole_) return domain_.contains(phi);
    return std::any_of(boxes_.begin(), boxes_.end(), [&](const Box& b) { return b.contains_cell(phi, domain_); });
}

double RegionIndicator::volume() const {
    if (whole_) return domain_.volume();
    double v = 0.0;
    for (const auto& b : boxes_) v += b.volume();
    return v;
}

Box RegionIndicator::bounding_box() const {
    if (whole_ || boxes_.empty()) return domain_;
    Box out = boxes_.front();
    for (const auto& b : boxes_) {
        for (std::size_t i = 0; i < out.dimension(); ++i) {
            out.lo[i] = std::min(out.lo[i], b.lo[i]);
            out.hi[i] = std::max(out.hi[i], b.hi[i]);
        }
    }
    return out;
}

FailureEstimate direct_mcs(const StochasticModel& model, const LimitStateModel& lsm, std::size_t n,
                           RandomStream& stream) {
    if (n == 0) throw ArgumentError("direct_mcs needs at least one sample");
    const std::uint64_t before = lsm.evaluations();
    FailureEstimate est;
    for (std::size_t i = 0; i < n; ++i) {
        AugmentedSample s = sample_augmented(model, lsm, stream);
        if (s.failed) est.failure_samples.push_back(std::move(s));
    }
    est.n_evals = lsm.evaluations() - before;
    const auto nf = static_cast<double>(est.failure_samples.size());
    est.p_hat = nf / static_cast<double>(n);
    if (est.failure_samples.empty()) {
        est.status = EstimateStatus::no_failure;
        est.cov = std::numeric_limits<double>::infinity();
    } else {
        est.cov = std::sqrt((1.0 - est.p_hat) / (static_cast<double>(n) * est.p_hat));
    }
    return est;
}

namespace {

// One component-wise MMH transition of `cur`. The phi components have a
// uniform prior on `bounds` (ratio 1 inside); z components are standard
// normal. The joint candidate is then kept only if it is in the region and
// `admit` accepts its evaluation. Returns true when the state moved.
template <class Admit>
bool mmh_step(AugmentedSample& cur, const StochasticModel& model, const LimitStateModel& lsm,
              const ProposalScales& scales, const Box& bounds, const RegionIndicator& region, Admit&& admit,
              RandomStream& stream, std::uint64_t& evaluations) {
    AugmentedSample cand;
    cand.phi = cur.phi;
    cand.z = cur.z;
    bool changed = false;
    for (std::size_t i = 0; i < cand.phi.size(); ++i) {
        const double x = cur.phi[i] + stream.uniform(-scales.phi[i], scales.phi[i]);
        if (x >= bounds.lo[i] && x <= bounds.hi[i]) {
            cand.phi[i] = x;
            changed = true;
        }
    }
    for (std::size_t j = 0; j < cand.z.size(); ++j) {
        const double z = cur.z[j];
        const double xi = z + stream.uniform(-scales.z[j], scales.z[j]);
        const double ratio = std::exp(-0.5 * (xi * xi - z * z));
        if (stream.uniform() < ratio) {
            cand.z[j] = xi;
            changed = true;
        }
    }
    if (!changed || !region.contains(cand.phi)) return false;
    cand.theta = model.to_physical(cand.phi, cand.z);
    if (!lsm.admissible(cand.phi, cand.theta)) return false;
    const Evaluation e = lsm.evaluate(cand.phi, cand.theta);
    ++evaluations;
    cand.failed = e.failed;
    cand.performance = e.performance;
    cand.margin = e.margin;
    if (!admit(cand)) return false;
    cur = std::move(cand);
    return true;
}

double stddev(std::span<const double> v) {
    if (v.size() < 2) return 0.0;
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

ProposalScales seed_scales(std::span<const AugmentedSample> seeds, const RegionIndicator& region, double factor) {
    if (seeds.empty()) throw ArgumentError("seed_scales needs at least one seed");
    const Box bb = region.bounding_box();
    ProposalScales out;
    std::vector<double> col(seeds.size());
    for (std::size_t i = 0; i < seeds.front().phi.size(); ++i) {
        for (std::size_t s = 0; s < seeds.size(); ++s) col[s] = seeds[s].phi[i];
        const double sd = stddev(col);
        out.phi.push_back(sd > 0.0 ? factor * sd : 0.1 * bb.width(i));
    }
    for (std::size_t j = 0; j < seeds.front().z.size(); ++j) {
        for (std::size_t s = 0; s < seeds.size(); ++s) col[s] = seeds[s].z[j];
        const double sd = stddev(col);
        out.z.push_back(sd > 0.0 ? factor * sd : 1.0);
    }
    return out;
}

Chain mmh_chain(const AugmentedSample& seed, const RegionIndicator& region, const StochasticModel& model,
                const LimitStateModel& lsm, const ProposalScales& scales, std::size_t n_steps, RandomStream& stream) {
    if (!seed.failed) throw ArgumentError("mmh_chain seed is not a failure sample");
    if (!region.contains(seed.phi)) throw ArgumentError("mmh_chain seed lies outside the region");
    if (scales.phi.size() != seed.phi.size() || scales.z.size() != seed.z.size()) {
        throw ArgumentError("mmh_chain proposal scales do not match the sample dimensions");
    }

    Chain chain;
    chain.states.reserve(n_steps);
    AugmentedSample cur = seed;
    const Box& bounds = model.space().box();
    auto admit = [](const AugmentedSample& c) { return c.failed; };
    for (std::size_t step = 0; step < n_steps; ++step) {
        if (mmh_step(cur, model, lsm, scales, bounds, region, admit, stream, chain.stats.evaluations)) {
            ++chain.stats.accepted;
        }
        chain.states.push_back(cur);
    }
    chain.stats.steps = n_steps;
    chain.stats.acceptance_rate = n_steps ? static_cast<double>(chain.stats.accepted) / n_steps : 0.0;

    // Spread of the emitted states against a scale-free reference: the region
    // width for phi, unit variance for z.
    const Box bb = region.bounding_box();
    double diversity = 0.0;
    std::vector<double> col(chain.states.size());
    for (std::size_t i = 0; i < seed.phi.size(); ++i) {
        for (std::size_t s = 0; s < col.size(); ++s) col[s] = chain.states[s].phi[i];
        diversity = std::max(diversity, stddev(col) / (bb.width(i) / std::sqrt(12.0)));
    }
    for (std::size_t j = 0; j < seed.z.size(); ++j) {
        for (std::size_t s = 0; s < col.size(); ++s) col[s] = chain.states[s].z[j];
        diversity = std::max(diversity, stddev(col));
    }
    chain.stats.diversity = diversity;
    chain.stats.stuck = n_steps >= 10 && (chain.stats.acceptance_rate < 0.01 || diversity < 1e-3);
    return chain;
}

std::uint64_t populate_cost_bound(std::size_t seeds, const PopulateOptions& options) {
    const std::size_t chains = std::min(seeds, options.max_chains);
    const std::size_t fresh = options.n_target > seeds ? options.n_target - seeds : 0;
    return fresh == 0 ? 0 : static_cast<std::uint64_t>(chains * options.burn_in + fresh);
}

Population populate_region(std::span<const AugmentedSample> prev, const RegionIndicator& region,
                           const StochasticModel& model, const LimitStateModel& lsm, const PopulateOptions& options,
                           const RandomStream& stream) {
    Population out;
    for (const auto& s : prev) {
        if (s.failed && region.contains(s.phi)) out.samples.push_back(s);
    }
    out.seeds = out.samples.size();
    if (out.seeds == 0) {
        throw PopulationError("no failure sample of the previous stage lies in the region; "
                              "increase the previous stage budget");
    }
    if (out.seeds >= options.n_target) return out;

    const std::size_t chains = std::min(out.seeds, std::max<std::size_t>(options.max_chains, 1));
    const std::size_t fresh = options.n_target - out.seeds;
    const ProposalScales scales = seed_scales(std::span(out.samples), region, options.scale_factor);

    std::vector<Chain> results(chains);
    auto run_chain = [&](std::size_t c) {
        const std::size_t seed_index = c * out.seeds / chains;
        const std::size_t length = fresh / chains + (c < fresh % chains ? 1 : 0);
        RandomStream rs = stream.child(c);
        Chain ch = mmh_chain(out.samples[seed_index], region, model, lsm, scales, options.burn_in + length, rs);
        ch.states.erase(ch.states.begin(), ch.states.begin() + static_cast<std::ptrdiff_t>(options.burn_in));
        results[c] = std::move(ch);
    };

    const unsigned workers = std::max(1u, std::min<unsigned>(options.threads, static_cast<unsigned>(chains)));
    if (workers == 1) {
        for (std::size_t c = 0; c < chains; ++c) run_chain(c);
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                for (std::size_t c = w; c < chains; c += workers) run_chain(c);
            });
        }
        for (auto& t : pool) t.join();
    }

    std::size_t accepted = 0;
    std::size_t steps = 0;
    for (auto& ch : results) {
        out.evaluations += ch.stats.evaluations;
        accepted += ch.stats.accepted;
        steps += ch.stats.steps;
        if (ch.stats.stuck) ++out.stuck_chains;
        std::move(ch.states.begin(), ch.states.end(), std::back_inserter(out.samples));
    }
    out.chains = chains;
    out.acceptance_rate = steps ? static_cast<double>(accepted) / static_cast<double>(steps) : 0.0;
    return out;
}

FailureEstimate subset_simulation(const StochasticModel& model, const LimitStateModel& lsm,
                                  const SubsetOptions& options, RandomStream& stream) {
    const double p0 = options.p0;
    if (!(p0 > 0.0 && p0 < 1.0)) throw ArgumentError("subset simulation needs 0 < p0 < 1");
    const double nc_real = static_cast<double>(options.n_per_level) * p0;
    const auto n_seeds = static_cast<std::size_t>(std::llround(nc_real));
    if (std::abs(nc_real - static_cast<double>(n_seeds)) > 1e-9 || n_seeds < 2) {
        throw ArgumentError("subset simulation needs n_per_level * p0 to be an integer >= 2");
    }
    const std::size_t n = options.n_per_level;
    const std::size_t chain_length = n / n_seeds;

    const std::uint64_t before = lsm.evaluations();
    const Box& bounds = model.space().box();
    const RegionIndicator everywhere = RegionIndicator::whole(bounds);

    ProposalScales scales;
    for (std::size_t i = 0; i < bounds.dimension(); ++i) scales.phi.push_back(bounds.width(i) / std::sqrt(12.0));
    scales.z.assign(model.random_dimension(), 1.0);

    std::vector<AugmentedSample> level;
    level.reserve(n);
    for (std::size_t i = 0; i < n; ++i) level.push_back(sample_augmented(model, lsm, stream));

    FailureEstimate est;
    double p_level = 1.0;
    double cov2 = 0.0;
    std::uint64_t unused_evals = 0;
    for (std::size_t m = 0;; ++m) {
        std::sort(level.begin(), level.end(),
                  [](const AugmentedSample& a, const AugmentedSample& b) { return a.margin < b.margin; });
        const std::size_t n_fail =
            static_cast<std::size_t>(std::count_if(level.begin(), level.end(), [](const auto& s) { return s.failed; }));
        const double threshold = 0.5 * (level[n_seeds - 1].margin + level[n_seeds].margin);
        if (n_fail >= n_seeds || threshold <= 0.0) {
            const double frac = static_cast<double>(n_fail) / static_cast<double>(n);
            est.p_hat = p_level * frac;
            if (frac > 0.0) cov2 += (1.0 - frac) / (static_cast<double>(n) * frac);
            for (auto& s : level) {
                if (s.failed) est.failure_samples.push_back(std::move(s));
            }
            break;
        }
        if (m + 1 >= options.max_levels) {
            est.level_thresholds.push_back(threshold);
            throw LevelsExceeded(fmt::format("subset simulation did not reach failure in {} levels", options.max_levels),
                                 est.level_thresholds);
        }
        est.level_thresholds.push_back(threshold);
        p_level *= p0;
        cov2 += (1.0 - p0) / (static_cast<double>(n) * p0);

        std::vector<AugmentedSample> next;
        next.reserve(n);
        auto admit = [threshold](const AugmentedSample& c) { return c.margin <= threshold; };
        for (std::size_t s = 0; s < n_seeds; ++s) {
            AugmentedSample cur = level[s];
            next.push_back(cur);
            for (std::size_t step = 1; step < chain_length; ++step) {
                mmh_step(cur, model, lsm, scales, bounds, everywhere, admit, stream, unused_evals);
                next.push_back(cur);
            }
        }
        level = std::move(next);
    }
    est.n_evals = lsm.evaluations() - before;
    est.cov = std::sqrt(cov2);
    est.status = est.failure_samples.empty() ? EstimateStatus::no_failure : EstimateStatus::ok;
    return est;
}

}  // namespace fpf
