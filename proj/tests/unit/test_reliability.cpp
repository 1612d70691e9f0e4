#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "fpf/benchmarks.hpp"
#include "fpf/errors.hpp"
#include "fpf/reliability.hpp"
#include "oracles.hpp"

using namespace fpf;

namespace {

const double kToyPf = (oracle::upper_tail_integral(4.0) - oracle::upper_tail_integral(0.0)) / 4.0;

StochasticModel fixed_design(double phi, double eps = 1e-12) {
    return StochasticModel(DesignSpace({phi}, {phi + eps}),
                           {RandomVariableSpec::normal("z", Tie::constant(0.0), Tie::constant(1.0))});
}

AugmentedSample failing_seed(const StochasticModel& m, const LimitStateModel& lsm, RandomStream& stream) {
    for (;;) {
        auto s = sample_augmented(m, lsm, stream);
        if (s.failed) return s;
    }
}

}  // namespace

TEST_CASE("direct MCS on the toy model") {
    const StochasticModel m = toy_stochastic_model();
    const ToyModel lsm;
    RandomStream stream(1);
    const FailureEstimate e = direct_mcs(m, lsm, 1000000, stream);
    const double band = 3.0 * std::sqrt(kToyPf * (1.0 - kToyPf) / 1e6);
    CHECK(std::abs(e.p_hat - kToyPf) <= band);
    CHECK(e.n_evals == lsm.evaluations());
    CHECK(e.status == EstimateStatus::ok);
    CHECK(std::all_of(e.failure_samples.begin(), e.failure_samples.end(), [](const auto& s) { return s.failed; }));
    CHECK(e.failure_samples.size() == static_cast<std::size_t>(std::llround(e.p_hat * 1e6)));
}

TEST_CASE("direct MCS with no failure") {
    const StochasticModel m = toy_stochastic_model();
    const LinearModel never(1.0, {0.0}, {0.0});
    RandomStream stream(2);
    const FailureEstimate e = direct_mcs(m, never, 100, stream);
    CHECK(e.p_hat == 0.0);
    CHECK(e.status == EstimateStatus::no_failure);
    CHECK(e.failure_samples.empty());
}

TEST_CASE("direct MCS is unbiased over repetitions") {
    const StochasticModel m = toy_stochastic_model();
    const ToyModel lsm;
    const RandomStream root(77);
    double sum = 0.0;
    const int reps = 200;
    for (int r = 0; r < reps; ++r) {
        RandomStream s = root.child(static_cast<std::uint64_t>(r));
        sum += direct_mcs(m, lsm, 1000, s).p_hat;
    }
    const double se = std::sqrt(kToyPf * (1.0 - kToyPf) / 1000.0 / reps);
    CHECK(std::abs(sum / reps - kToyPf) <= 3.0 * se);
}

TEST_CASE("subset simulation reaches a rare event") {
    const StochasticModel m = fixed_design(3.0);
    const ToyModel lsm;
    RandomStream stream(5);
    const FailureEstimate e = subset_simulation(m, lsm, SubsetOptions{1000, 0.1, 10}, stream);
    const double exact = oracle::normal_cdf(-3.0);
    CHECK(exact == doctest::Approx(1.3499e-3).epsilon(1e-4));
    CHECK(e.p_hat == doctest::Approx(exact).epsilon(0.3));
    CHECK(e.n_evals == lsm.evaluations());
    CHECK(e.level_thresholds.size() >= 2);
    CHECK(std::all_of(e.failure_samples.begin(), e.failure_samples.end(), [](const auto& s) { return s.failed; }));
}

TEST_CASE("subset simulation stops at the first level for a frequent event") {
    const StochasticModel m = fixed_design(0.5);
    const ToyModel lsm;
    RandomStream stream(6);
    const FailureEstimate e = subset_simulation(m, lsm, SubsetOptions{1000, 0.1, 10}, stream);
    CHECK(e.level_thresholds.empty());
    CHECK(e.n_evals == 1000);
    CHECK(e.p_hat == static_cast<double>(e.failure_samples.size()) / 1000.0);
}

TEST_CASE("subset simulation reports exhausted levels") {
    const StochasticModel m = fixed_design(8.0);
    const ToyModel lsm;
    RandomStream stream(7);
    CHECK_THROWS_AS(subset_simulation(m, lsm, SubsetOptions{100, 0.1, 2}, stream), LevelsExceeded);
}

TEST_CASE("MMH chain samples a truncated normal") {
    // Target: z ~ N(0, 1) conditioned on z >= 2 (design coordinate pinned).
    const StochasticModel m = fixed_design(2.0, 1e-12);
    const ToyModel lsm;
    RandomStream stream(8);
    const AugmentedSample seed = failing_seed(m, lsm, stream);
    const RegionIndicator whole = RegionIndicator::whole(m.space().box());
    const ProposalScales scales{{1e-13}, {1.0}};
    const std::size_t thin = 10, keep = 10000;
    const Chain c = mmh_chain(seed, whole, m, lsm, scales, keep * thin + 1000, stream);
    std::vector<double> x;
    for (std::size_t i = 1000; i < c.states.size(); i += thin) x.push_back(c.states[i].z[0]);
    REQUIRE(x.size() == keep);
    const double tail = oracle::normal_cdf(-2.0);
    const double d = oracle::ks_statistic(x, [&](double v) { return (oracle::normal_cdf(v) - oracle::normal_cdf(2.0)) / tail; });
    CHECK(d < oracle::ks_critical_001(keep));
    CHECK(std::all_of(c.states.begin(), c.states.end(), [](const auto& s) { return s.failed; }));
}

TEST_CASE("MMH preserves the coarse two-state target") {
    // Region {phi in [0, 2]}, F = {theta >= phi}: p(phi | F) is proportional to
    // Phi(-phi), so the two halves carry masses given by the tail integral.
    const StochasticModel m(DesignSpace({0.0}, {2.0}),
                            {RandomVariableSpec::normal("z", Tie::constant(0.0), Tie::constant(1.0))});
    const ToyModel lsm;
    RandomStream stream(9);
    const AugmentedSample seed = failing_seed(m, lsm, stream);
    const RegionIndicator whole = RegionIndicator::whole(m.space().box());
    const Chain c = mmh_chain(seed, whole, m, lsm, ProposalScales{{0.8}, {1.0}}, 400000, stream);

    const double lower = oracle::upper_tail_integral(1.0) - oracle::upper_tail_integral(0.0);
    const double upper = oracle::upper_tail_integral(2.0) - oracle::upper_tail_integral(1.0);
    const double target = lower / (lower + upper);

    // Batch means for the standard error of a correlated chain.
    const std::size_t batches = 40, per = c.states.size() / batches;
    std::vector<double> means;
    for (std::size_t b = 0; b < batches; ++b) {
        double in = 0.0;
        for (std::size_t i = b * per; i < (b + 1) * per; ++i) in += c.states[i].phi[0] < 1.0 ? 1.0 : 0.0;
        means.push_back(in / static_cast<double>(per));
    }
    double mean = 0.0;
    for (double v : means) mean += v;
    mean /= batches;
    double var = 0.0;
    for (double v : means) var += (v - mean) * (v - mean);
    const double se = std::sqrt(var / (batches - 1) / batches);
    CHECK(std::abs(mean - target) <= 4.0 * se + 1e-3);

    // Empirical two-state transition matrix keeps the target distribution.
    double n[2][2] = {{0, 0}, {0, 0}};
    for (std::size_t i = 1; i < c.states.size(); ++i) {
        const int a = c.states[i - 1].phi[0] < 1.0 ? 0 : 1;
        const int b = c.states[i].phi[0] < 1.0 ? 0 : 1;
        n[a][b] += 1.0;
    }
    const double p01 = n[0][1] / (n[0][0] + n[0][1]);
    const double p10 = n[1][0] / (n[1][0] + n[1][1]);
    const double stationary = p10 / (p01 + p10);
    CHECK(std::abs(stationary - target) <= 4.0 * se + 1e-3);
}

TEST_CASE("MMH rejects candidates outside the region") {
    const StochasticModel m(DesignSpace({0.0}, {4.0}),
                            {RandomVariableSpec::normal("z", Tie::constant(0.0), Tie::constant(1.0))});
    const ToyModel lsm;
    RandomStream stream(10);
    AugmentedSample seed;
    do {
        seed = sample_augmented(m, lsm, stream);
    } while (!(seed.failed && seed.phi[0] < 1.0));
    const RegionIndicator region = RegionIndicator::cells(m.space().box(), {Box({0.0}, {1.0})});
    const Chain c = mmh_chain(seed, region, m, lsm, ProposalScales{{2.0}, {1.0}}, 2000, stream);
    for (const auto& s : c.states) CHECK(region.contains(s.phi));
    CHECK(c.stats.acceptance_rate < 1.0);
}

TEST_CASE("vanishing proposal flags a stuck chain") {
    const StochasticModel m = toy_stochastic_model();
    const ToyModel lsm;
    RandomStream stream(11);
    const AugmentedSample seed = failing_seed(m, lsm, stream);
    const RegionIndicator whole = RegionIndicator::whole(m.space().box());
    const Chain c = mmh_chain(seed, whole, m, lsm, ProposalScales{{1e-12}, {1e-12}}, 500, stream);
    CHECK(c.stats.acceptance_rate > 0.99);
    CHECK(c.stats.diversity < 1e-6);
    CHECK(c.stats.stuck);
}

TEST_CASE("populate region") {
    const StochasticModel m = toy_stochastic_model();
    const ToyModel lsm;
    RandomStream stream(12);
    const FailureEstimate pilot = direct_mcs(m, lsm, 20000, stream);

    SUBCASE("already full") {
        const RegionIndicator whole = RegionIndicator::whole(m.space().box());
        PopulateOptions o;
        o.n_target = pilot.failure_samples.size();
        const std::uint64_t before = lsm.evaluations();
        const Population p = populate_region(pilot.failure_samples, whole, m, lsm, o, RandomStream(1));
        CHECK(p.samples.size() == pilot.failure_samples.size());
        CHECK(lsm.evaluations() == before);
        for (std::size_t i = 0; i < p.samples.size(); ++i) CHECK(p.samples[i].phi == pilot.failure_samples[i].phi);
    }
    SUBCASE("tail region") {
        const RegionIndicator tail = RegionIndicator::cells(m.space().box(), {Box({3.0}, {4.0})});
        PopulateOptions o;
        o.n_target = 3000;
        const std::uint64_t before = lsm.evaluations();
        const Population p = populate_region(pilot.failure_samples, tail, m, lsm, o, RandomStream(2));
        CHECK(p.samples.size() >= o.n_target);
        CHECK(p.evaluations == lsm.evaluations() - before);
        CHECK(p.evaluations <= populate_cost_bound(p.seeds, o));
        for (const auto& s : p.samples) {
            CHECK(s.phi[0] >= 3.0);
            CHECK(s.failed);
        }
    }
    SUBCASE("empty region") {
        const RegionIndicator none = RegionIndicator::cells(m.space().box(), {Box({3.99}, {4.0})});
        PopulateOptions o;
        o.n_target = 10;
        CHECK_THROWS_AS(populate_region(pilot.failure_samples, none, m, lsm, o, RandomStream(3)), PopulationError);
    }
}

TEST_CASE("population does not depend on the thread count") {
    const StochasticModel m = toy_stochastic_model();
    const ToyModel lsm;
    RandomStream stream(13);
    const FailureEstimate pilot = direct_mcs(m, lsm, 5000, stream);
    const RegionIndicator region = RegionIndicator::cells(m.space().box(), {Box({1.0}, {4.0})});
    PopulateOptions o;
    o.n_target = 2000;
    o.threads = 1;
    const Population a = populate_region(pilot.failure_samples, region, m, lsm, o, RandomStream(4));
    o.threads = 4;
    const Population b = populate_region(pilot.failure_samples, region, m, lsm, o, RandomStream(4));
    REQUIRE(a.samples.size() == b.samples.size());
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        CHECK(a.samples[i].phi == b.samples[i].phi);
        CHECK(a.samples[i].z == b.samples[i].z);
    }
}

TEST_CASE("region indicator membership is half-open except on the domain's upper face") {
    const Box domain({0.0, 0.0}, {1.0, 1.0});
    const RegionIndicator r = RegionIndicator::cells(domain, {Box({0.0, 0.0}, {0.5, 1.0})});
    CHECK(r.contains(std::vector<double>{0.25, 1.0}));
    CHECK_FALSE(r.contains(std::vector<double>{0.5, 0.5}));
    CHECK(r.volume() == 0.5);
    const RegionIndicator s = RegionIndicator::cells(domain, {Box({0.5, 0.0}, {1.0, 1.0})});
    CHECK(s.contains(std::vector<double>{1.0, 1.0}));
}
