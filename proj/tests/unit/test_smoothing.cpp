#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "fpf/benchmarks.hpp"
#include "fpf/errors.hpp"
#include "fpf/fpf_iterate.hpp"
#include "fpf/smoothing.hpp"
#include "oracles.hpp"

using namespace fpf;

namespace {

// Gauss-Legendre rule on [-1, 1], 20 nodes, for tensor quadrature.
struct Gauss {
    std::vector<double> x, w;
    Gauss() {
        const int n = 20;
        for (int i = 1; i <= n; ++i) {
            double z = std::cos(M_PI * (i - 0.25) / (n + 0.5)), dp = 0.0;
            for (int it = 0; it < 100; ++it) {
                double p0 = 1.0, p1 = 0.0;
                for (int j = 1; j <= n; ++j) {
                    const double p2 = p1;
                    p1 = p0;
                    p0 = ((2.0 * j - 1.0) * z * p1 - (j - 1.0) * p2) / j;
                }
                dp = n * (z * p0 - p1) / (z * z - 1.0);
                const double dz = p0 / dp;
                z -= dz;
                if (std::abs(dz) < 1e-16) break;
            }
            x.push_back(z);
            w.push_back(2.0 / ((1.0 - z * z) * dp * dp));
        }
    }
};

// Composite Gauss average of f over [lo, hi] (1-d), with `pieces` panels.
template <class F>
double average_1d(F f, double lo, double hi, int pieces = 8) {
    static const Gauss g;
    double s = 0.0;
    const double h = (hi - lo) / pieces;
    for (int p = 0; p < pieces; ++p) {
        const double a = lo + p * h;
        for (std::size_t i = 0; i < g.x.size(); ++i) s += 0.5 * h * g.w[i] * f(a + 0.5 * h * (g.x[i] + 1.0));
    }
    return s / (hi - lo);
}

template <class F>
double average_2d(F f, const Box& b, int pieces = 6) {
    return average_1d([&](double x) { return average_1d([&](double y) { return f(x, y); }, b.lo[1], b.hi[1], pieces); },
                      b.lo[0], b.hi[0], pieces);
}

RegressionSurface single_cell(const Box& domain, std::vector<double> center, std::vector<double> extent, double l) {
    const std::size_t d = domain.dimension();
    return RegressionSurface(domain, {std::move(center)}, {std::move(extent)}, {0.0}, std::vector<double>(d, l), 1.0,
                             1e-4, {0.0}, {1.0});
}

std::shared_ptr<RegionChainResult> toy_chain(std::uint64_t seed) {
    PipelineOptions o;
    o.pilot_samples = 8000;
    o.iteration_budget = 7000;
    o.max_iterations = 4;
    const ToyModel lsm;
    return run_pipeline(o, toy_stochastic_model(), lsm, seed);
}

}  // namespace

TEST_CASE("point-to-cell kernel is the cell average of the point kernel") {
    const Box dom({0.0}, {1.0});
    const double l = 0.13;
    const auto s = single_cell(dom, {0.4}, {0.3}, l);
    for (double x : {0.0, 0.1, 0.25, 0.4, 0.55, 0.8, 1.0}) {
        const double exact = average_1d([&](double y) { return std::exp(-0.5 * (x - y) * (x - y) / (l * l)); }, 0.25, 0.55);
        CHECK(s.log_density(std::vector<double>{x}) == doctest::Approx(exact).epsilon(1e-12));
    }
}

TEST_CASE("cell-to-cell kernel is the double cell average") {
    const Box dom({0.0, 0.0}, {2.0, 1.0});
    const std::vector<double> scales{0.2, 0.35};
    const RegressionSurface s(dom, {{0.7, 0.5}}, {{0.4, 0.3}}, {0.0}, scales, 1.0, 1e-4, {0.0}, {1.0});
    auto k = [&](double x, double y) { return s.log_density(std::vector<double>{x, y}); };
    for (const auto& [c, w] : std::vector<std::pair<std::vector<double>, std::vector<double>>>{
             {{0.7, 0.5}, {0.4, 0.3}}, {{1.5, 0.2}, {0.5, 0.25}}, {{0.1, 0.9}, {0.2, 0.2}}}) {
        const Box cell({c[0] - w[0] / 2, c[1] - w[1] / 2}, {c[0] + w[0] / 2, c[1] + w[1] / 2});
        CHECK(s.cell_average(c, w) == doctest::Approx(average_2d(k, cell)).epsilon(1e-10));
    }
    // A point query is the plain evaluation.
    CHECK(s.cell_average(std::vector<double>{1.1, 0.3}, {}) == doctest::Approx(k(1.1, 0.3)).epsilon(1e-14));
}

TEST_CASE("a thin cell behaves as a point") {
    const Box dom({0.0}, {1.0});
    const auto thin = single_cell(dom, {0.5}, {1e-7}, 0.2);
    const auto point = single_cell(dom, {0.5}, {}, 0.2);
    for (double x : {0.1, 0.45, 0.9}) {
        CHECK(thin.log_density(std::vector<double>{x}) == doctest::Approx(point.log_density(std::vector<double>{x})).epsilon(1e-9));
    }
}

TEST_CASE("trend basis") {
    const std::vector<double> u{0.5, 2.0};
    CHECK(trend_basis(u, 0) == std::vector<double>{1.0});
    CHECK(trend_basis(u, 1) == std::vector<double>{1.0, 0.5, 2.0});
    CHECK(trend_basis(u, 2) == std::vector<double>{1.0, 0.5, 2.0, 0.25, 1.0, 4.0});
}

TEST_CASE("support points of a single-level chain") {
    auto chain = std::make_shared<RegionChainResult>();
    chain->domain = Box({0.0}, {1.0});
    BinaryPartition p(chain->domain);
    p.split(0, 0);
    PiecewiseConstantDensity d(std::move(p), std::vector<double>{0.0, 0.8, 0.2});
    PartitionLevel l(0, RegionIndicator::whole(chain->domain), d);
    l.threshold = threshold_from_ratio(d, 0.2);
    l.split = split_region(d, l.threshold.density);
    chain->levels.push_back(std::move(l));
    const auto pts = extract_support_points(*chain);
    REQUIRE(pts.size() == 2);
    CHECK(pts[0].location == std::vector<double>{0.25});
    CHECK(pts[1].location == std::vector<double>{0.75});
    CHECK(pts[0].value == doctest::Approx(1.6));
    CHECK(pts[1].value == doctest::Approx(0.4));
    CHECK(pts[0].extent == std::vector<double>{0.5});
}

TEST_CASE("constant values give a constant surface") {
    const Box dom({0.0, 0.0}, {1.0, 1.0});
    std::vector<SupportPoint> pts;
    for (double x : {0.1, 0.4, 0.8})
        for (double y : {0.2, 0.7}) pts.push_back({{x, y}, 0.37, 0, {0.1, 0.1}});
    const auto s = RegressionSurface::fit(pts, dom);
    RandomStream r(1);
    for (int i = 0; i < 50; ++i) {
        const std::vector<double> x{r.uniform(), r.uniform()};
        CHECK(std::abs(s.log_density(x) - std::log(0.37)) < 1e-8);
        const auto g = fpf_gradient(s, 0.1, 1.0, x);
        CHECK(std::abs(g.value[0]) < 1e-12);
        CHECK(std::abs(g.value[1]) < 1e-12);
    }
}

TEST_CASE("interpolation limit at a tiny noise floor") {
    const Box dom({0.0, 0.0}, {1.0, 1.0});
    RandomStream r(2);
    std::vector<SupportPoint> pts;
    for (int i = 0; i < 30; ++i) {
        const double x = r.uniform(), y = r.uniform();
        pts.push_back({{x, y}, std::exp(std::sin(3.0 * x) + y * y), 0, {}});
    }
    SurfaceOptions o;
    o.noise_floor = 1e-8;
    o.select_noise = false;
    const auto s = RegressionSurface::fit(pts, dom, o);
    for (const auto& p : pts) CHECK(std::exp(s.log_density(p.location)) == doctest::Approx(p.value).epsilon(1e-4));
}

TEST_CASE("cell support reproduces the cell averages") {
    const Box dom({0.0}, {4.0});
    std::vector<SupportPoint> pts;
    for (int i = 0; i < 16; ++i) {
        const double lo = 0.25 * i, hi = lo + 0.25;
        const double avg = average_1d([](double x) { return std::log(oracle::normal_cdf(-x)); }, lo, hi);
        pts.push_back({{lo + 0.125}, std::exp(avg), 0, {0.25}});
    }
    SurfaceOptions o;
    o.select_noise = false;
    const auto s = RegressionSurface::fit(pts, dom, o);
    for (const auto& p : pts) {
        CHECK(std::abs(s.cell_average(p.location, p.extent) - std::log(p.value)) <= 3.0 * o.noise_floor);
    }
}

TEST_CASE("log upper tail on a grid") {
    const Box dom({0.0}, {4.0});
    std::vector<SupportPoint> pts;
    for (int i = 0; i <= 12; ++i) {
        const double x = 4.0 * i / 12.0;
        pts.push_back({{x}, oracle::normal_cdf(-x), 0, {}});
    }
    const auto s = RegressionSurface::fit(pts, dom);
    double err = 0.0;
    int n = 0;
    for (int i = 0; i < 12; ++i) {
        const double x = 4.0 * (i + 0.5) / 12.0;
        err += std::abs(s.log_density(std::vector<double>{x}) - std::log(oracle::normal_cdf(-x)));
        ++n;
    }
    CHECK(err / n < 0.05);
}

TEST_CASE("conflicting duplicates and too few points") {
    const Box dom({0.0}, {1.0});
    std::vector<SupportPoint> dup{{{0.5}, 1.0, 0, {}}, {{0.5}, 2.0, 0, {}}, {{0.1}, 1.0, 0, {}}};
    CHECK_THROWS_AS(RegressionSurface::fit(dup, dom), FitError);
    std::vector<SupportPoint> one{{{0.5}, 1.0, 0, {}}};
    CHECK_THROWS_AS(RegressionSurface::fit(one, dom), ArgumentError);
    std::vector<SupportPoint> bad{{{0.5}, 0.0, 0, {}}, {{0.1}, 1.0, 0, {}}};
    CHECK_THROWS_AS(RegressionSurface::fit(bad, dom), FitError);
}

TEST_CASE("gradient matches central differences") {
    const Box dom({30.0, 30.0}, {50.0, 50.0});
    RandomStream r(3);
    std::vector<SupportPoint> pts;
    for (int i = 0; i < 8; ++i) {
        for (int j = 0; j < 8; ++j) {
            const double x = 31.25 + 2.5 * i, y = 31.25 + 2.5 * j;
            const double v = std::exp(-0.02 * (x - 36) * (x - 36) - 0.05 * (y - 33) * (y - 33) + 0.3 * r.normal());
            pts.push_back({{x, y}, v, 0, {2.5, 2.5}});
        }
    }
    const auto s = RegressionSurface::fit(pts, dom);
    const double pf = 0.08, prior = 1.0 / 400.0;
    int good = 0;
    for (int t = 0; t < 100; ++t) {
        const std::vector<double> x{r.uniform(30.01, 49.99), r.uniform(30.01, 49.99)};
        const auto g = fpf_gradient(s, pf, prior, x);
        CHECK_FALSE(g.on_boundary);
        double diff = 0.0, norm = 0.0;
        for (std::size_t a = 0; a < 2; ++a) {
            const double h = 1e-4 * dom.width(a);
            auto xp = x, xm = x;
            xp[a] += h;
            xm[a] -= h;
            const double fd = (smoothed_fpf(s, pf, prior, xp) - smoothed_fpf(s, pf, prior, xm)) / (2.0 * h);
            diff = std::max(diff, std::abs(fd - g.value[a]));
            norm = std::max(norm, std::abs(g.value[a]));
        }
        if (diff <= 1e-4 * norm) ++good;
    }
    CHECK(good == 100);
    CHECK(fpf_gradient(s, pf, prior, std::vector<double>{30.0, 40.0}).on_boundary);
    CHECK_THROWS_AS(fpf_gradient(s, pf, prior, std::vector<double>{29.0, 40.0}), UndefinedQuery);
}

TEST_CASE("toy smoothed FPF") {
    const auto chain = toy_chain(1);
    const auto support = extract_support_points(*chain);
    for (const auto& p : support) CHECK(p.value > 0.0);
    const auto s = RegressionSurface::fit(support, chain->domain);
    auto fpf = [&](double x) { return smoothed_fpf(s, chain->p_failure, chain->prior_density, std::vector<double>{x}); };

    CHECK(std::abs(std::log10(fpf(2.0) / oracle::normal_cdf(-2.0))) <= 0.3);
    CHECK(std::abs(oracle::normal_cdf(-2.0) - 0.02275) < 1e-5);
    double prev = fpf(0.5);
    for (int i = 1; i < 50; ++i) {
        const double x = 0.5 + 3.0 * i / 49.0;
        const double v = fpf(x);
        CHECK(v < prev);
        prev = v;
        CHECK(fpf_gradient(s, chain->p_failure, chain->prior_density, std::vector<double>{x}).value[0] < 0.0);
    }
    // Smoothed and piecewise agree at the support cells to the piecewise noise.
    const FpfApproximation piecewise(chain);
    int close = 0;
    for (const auto& p : support) {
        const double a = std::exp(s.cell_average(p.location, p.extent)) * chain->p_failure / chain->prior_density;
        if (std::abs(a / piecewise(p.location) - 1.0) <= 0.1) ++close;
    }
    CHECK(close >= static_cast<int>(0.8 * support.size()));
}

TEST_CASE("beam leave-one-out errors") {
    PipelineOptions o;
    const BoxBeamModel lsm(500.0, 850.0, 910.0);
    const auto chain = run_pipeline(o, beam_stochastic_model(), lsm, 1);
    const auto s = RegressionSurface::fit(extract_support_points(*chain), chain->domain);
    const auto loo = loo_residuals(s);
    const auto small = std::count_if(loo.begin(), loo.end(), [](double e) { return std::abs(e) < 1.0; });
    CHECK(static_cast<double>(small) >= 0.9 * static_cast<double>(loo.size()));
    RandomStream r(4);
    for (int i = 0; i < 200; ++i) {
        const std::vector<double> x{r.uniform(30.0, 50.0), r.uniform(30.0, 50.0)};
        CHECK(std::isfinite(s.log_density(x)));
    }
}
