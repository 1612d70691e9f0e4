#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "fpf/design_opt.hpp"
#include "fpf/errors.hpp"
#include "oracles.hpp"

using namespace fpf;

namespace {

const Box kBeamBox({30.0, 30.0}, {50.0, 50.0});

ScalarField area() {
    return [](std::span<const double> phi) { return objective_mean_area(phi); };
}

// Failure probability falling with both section sizes, faster in h.
ScalarField synthetic_fpf() {
    return [](std::span<const double> phi) {
        return 0.3 * std::exp(-0.15 * (phi[0] - 30.0) - 0.9 * (phi[1] - 30.0));
    };
}

DesignProblem toy_problem(double allowable) {
    return {[](std::span<const double> phi) { return phi[0]; },
            [](std::span<const double> phi) { return oracle::normal_cdf(-phi[0]); }, allowable, Box({0.0}, {4.0})};
}

}  // namespace

TEST_CASE("mean area of a hollow box") {
    CHECK(objective_mean_area(std::vector<double>{30.0, 32.9}) == doctest::Approx(235.6));
    CHECK(objective_mean_area(std::vector<double>{30.0, 30.0}) == doctest::Approx(224.0));
    CHECK(objective_mean_area(std::vector<double>{40.0, 40.0}, 1e-9) == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("inactive constraint lands on the lower corner") {
    RandomStream s(1);
    const DesignProblem p{area(), [](std::span<const double>) { return 1e-9; }, 1e-2, kBeamBox};
    const OptimalDesign d = optimize(p, OptimizeOptions{}, s);
    CHECK(d.phi[0] == doctest::Approx(30.0).epsilon(1e-6));
    CHECK(d.phi[1] == doctest::Approx(30.0).epsilon(1e-6));
    CHECK_FALSE(d.active);
}

TEST_CASE("toy problem hits the normal quantile") {
    const double q = 2.3263478740408408;  // Phi^-1(0.99)
    CHECK(oracle::normal_cdf(-q) == doctest::Approx(1e-2).epsilon(1e-9));
    std::vector<double> optima;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        RandomStream s(seed);
        const OptimalDesign d = optimize(toy_problem(1e-2), OptimizeOptions{}, s);
        CHECK(std::abs(d.phi[0] - q) <= 0.1);
        CHECK(d.constraint <= 1e-2 * (1.0 + 1e-6));
        CHECK(d.active);
        optima.push_back(d.phi[0]);
    }
    const auto [lo, hi] = std::minmax_element(optima.begin(), optima.end());
    CHECK(*hi - *lo <= 0.05);
}

TEST_CASE("no feasible design") {
    RandomStream s(2);
    const DesignProblem p{area(), [](std::span<const double>) { return 0.5; }, 1e-2, kBeamBox};
    try {
        optimize(p, OptimizeOptions{}, s);
        FAIL("expected Infeasible");
    } catch (const Infeasible& e) {
        CHECK(e.least_violating().size() == 2);
        CHECK(e.violation() > 0.0);
    }
}

TEST_CASE("tightening the allowable never lowers the optimal objective") {
    double prev = -INFINITY;
    std::vector<double> h;
    for (double allowable : {1e-2, 1e-3, 1e-4}) {
        RandomStream s(3);
        const OptimalDesign d = optimize({area(), synthetic_fpf(), allowable, kBeamBox}, OptimizeOptions{}, s);
        CHECK(kBeamBox.contains(d.phi));
        CHECK(d.constraint <= allowable * (1.0 + 1e-6));
        CHECK(d.objective >= prev);
        prev = d.objective;
        h.push_back(d.phi[1]);
    }
    // Nested feasible sets: h grows as the allowable shrinks.
    CHECK(h[1] > h[0]);
    CHECK(h[2] > h[1]);
}

TEST_CASE("every start is traced") {
    RandomStream s(4);
    OptimizeOptions o;
    o.grid_per_dim = 2;
    o.random_starts = 3;
    const OptimalDesign d = optimize({area(), synthetic_fpf(), 1e-3, kBeamBox}, o, s);
    CHECK(d.trace.size() == 7);
    for (const auto& t : d.trace) CHECK(kBeamBox.contains(t.phi));
}
