#include <doctest.h>

#include <cmath>
#include <vector>

#include "fpf/benchmarks.hpp"
#include "fpf/errors.hpp"
#include "fpf/reliability.hpp"
#include "oracles.hpp"

using namespace fpf;

TEST_CASE("beam frequency by hand") {
    // A = 40*40 - 36*36, I = (40^4 - 36^4) / 12, omega = lambda^2 sqrt(E I / (rho A L^4)).
    const double a = 40.0 * 40.0 - 36.0 * 36.0;
    const double i = (std::pow(40.0, 4) - std::pow(36.0, 4)) / 12.0;
    CHECK(a == 304.0);
    CHECK(i == doctest::Approx(73365.33).epsilon(1e-6));
    const double hand = kCantileverLambda1 * kCantileverLambda1 *
                        std::sqrt(210e3 * i / (7800e-12 * a * std::pow(500.0, 4)));
    const double w = beam_frequency({40.0, 40.0, 2.0, 7800.0, 210.0}, 500.0);
    CHECK(w == doctest::Approx(hand).epsilon(1e-12));
    CHECK(w == doctest::Approx(1133.7).epsilon(1e-4));
}

TEST_CASE("beam frequency scaling laws") {
    const BeamSection s{37.0, 44.0, 2.1, 7700.0, 205.0};
    const double w = beam_frequency(s, 500.0);
    auto rel = [](double a, double b) { return std::abs(a / b - 1.0); };
    CHECK(rel(beam_frequency({s.b, s.h, s.t, s.rho, 2.0 * s.e}, 500.0), std::sqrt(2.0) * w) < 1e-12);
    CHECK(rel(beam_frequency({s.b, s.h, s.t, 2.0 * s.rho, s.e}, 500.0), w / std::sqrt(2.0)) < 1e-12);
    CHECK(rel(beam_frequency(s, 1000.0), w / 4.0) < 1e-12);
    CHECK_THROWS_AS(beam_frequency({10.0, 40.0, 6.0, 7800.0, 210.0}, 500.0), ArgumentError);
    CHECK_THROWS_AS(beam_frequency({40.0, 40.0, 2.0, -1.0, 210.0}, 500.0), ArgumentError);
}

TEST_CASE("band membership is closed") {
    // Scale E so that the nominal section lands on a chosen frequency.
    const double w0 = beam_frequency({40.0, 40.0, 2.0, 7800.0, 210.0}, 500.0);
    auto theta_for = [&](double target) {
        const double e = 210.0 * (target / w0) * (target / w0);
        return std::vector<double>{40.0, 40.0, 2.0, 7800.0, e};
    };
    const BoxBeamModel m(500.0, 550.0, 600.0);
    CHECK(m.beam_failure(theta_for(575.0)));
    CHECK_FALSE(m.beam_failure(theta_for(601.0)));
    CHECK_FALSE(m.beam_failure(theta_for(549.0)));
    const BoxBeamModel exact(500.0, 550.0, w0);
    CHECK(exact.beam_failure(std::vector<double>{40.0, 40.0, 2.0, 7800.0, 210.0}));
    CHECK_FALSE(m.admissible(std::vector<double>{40.0, 40.0}, std::vector<double>{3.0, 40.0, 2.0, 7800.0, 210.0}));
}

TEST_CASE("toy analytic FPF") {
    CHECK(toy_analytic_fpf(0.0) == 0.5);
    CHECK(toy_analytic_fpf(1.0) == doctest::Approx(0.158655).epsilon(1e-5));
    CHECK(toy_analytic_fpf(3.7) == doctest::Approx(1.078e-4).epsilon(1e-3));
    double prev = 1.0;
    for (int i = 0; i <= 40; ++i) {
        const double v = toy_analytic_fpf(0.1 * i);
        CHECK(v < prev);
        CHECK(v == doctest::Approx(oracle::normal_cdf(-0.1 * i)).epsilon(1e-12));
        prev = v;
    }
}

TEST_CASE("linear model") {
    const LinearModel m(1.0, {2.0}, {-1.0});
    const auto e = m.evaluate(std::vector<double>{0.5}, std::vector<double>{2.5});
    CHECK(e.performance == doctest::Approx(-0.5));
    CHECK(e.failed);
    CHECK(m.name() == "linear");
}

TEST_CASE("design grid") {
    const StochasticModel m = beam_stochastic_model();
    const auto g = design_grid(m.space(), 2);
    REQUIRE(g.size() == 4);
    CHECK(g[0] == std::vector<double>{30.0, 30.0});
    CHECK(g[1] == std::vector<double>{30.0, 50.0});
    CHECK(g[3] == std::vector<double>{50.0, 50.0});
    CHECK(design_grid(m.space(), 21).size() == 441);
    CHECK(design_grid(m.space(), 21)[1][1] == doctest::Approx(31.0));
}

TEST_CASE("toy grid oracle") {
    const StochasticModel m = toy_stochastic_model();
    const ToyModel lsm;
    const FpfGridOracle o = grid_dmcs_oracle(m, lsm, 21, 100000, 5, 2);
    REQUIRE(o.points.size() == 21);
    CHECK(o.total_evaluations == 2100000);
    CHECK(lsm.evaluations() == o.total_evaluations);
    for (const auto& p : o.points) {
        CHECK(p.n == 100000);
        const double exact = oracle::normal_cdf(-p.phi[0]);
        if (exact >= 1e-3) CHECK(std::abs(std::log10(p.pf_hat / exact)) < 0.15);
    }
    const ToyModel again;
    const FpfGridOracle o2 = grid_dmcs_oracle(m, again, 21, 100000, 5, 1);
    for (std::size_t i = 0; i < o.points.size(); ++i) CHECK(o.points[i].pf_hat == o2.points[i].pf_hat);
}

TEST_CASE("reference grid budget") {
    // 5.68e7 evaluations over a 21 x 21 grid.
    CHECK(5.68e7 / 441.0 == doctest::Approx(1.288e5).epsilon(1e-3));
}

TEST_CASE("beam pilot with the calibrated band") {
    const StochasticModel m = beam_stochastic_model();
    const BoxBeamModel lsm(500.0, 850.0, 910.0);
    RandomStream s(6);
    const FailureEstimate e = direct_mcs(m, lsm, 20000, s);
    CHECK(e.p_hat > 1e-3);
}
