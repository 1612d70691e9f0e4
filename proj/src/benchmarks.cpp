#include "fpf/benchmarks.hpp"

#include <cmath>
#include <thread>

#include <fmt/format.h>

#include "fpf/errors.hpp"
#include "fpf/random.hpp"

namespace fpf {

double beam_frequency(const BeamSection& s, double length_mm) {
    if (!(s.b > 0 && s.h > 0 && s.t > 0 && s.rho > 0 && s.e > 0 && length_mm > 0)) {
        throw ArgumentError("beam parameters must be positive");
    }
    if (!(s.b > 2.0 * s.t && s.h > 2.0 * s.t)) {
        throw ArgumentError(fmt::format("invalid geometry: t = {} with b = {}, h = {}", s.t, s.b, s.h));
    }
    const double bi = s.b - 2.0 * s.t;
    const double hi = s.h - 2.0 * s.t;
    const double area = s.b * s.h - bi * hi;                                  // mm^2
    const double inertia = (s.b * s.h * s.h * s.h - bi * hi * hi * hi) / 12.0;  // mm^4
    // N-mm-s-tonne units: E [GPa] -> N/mm^2, rho [kg/m^3] -> t/mm^3.
    const double e = s.e * 1e3;
    const double rho = s.rho * 1e-12;
    const double l2 = length_mm * length_mm;
    return kCantileverLambda1 * kCantileverLambda1 * std::sqrt(e * inertia / (rho * area * l2 * l2));
}

BoxBeamModel::BoxBeamModel(double length_mm, double band_lo, double band_hi)
    : length_(length_mm), lo_(band_lo), hi_(band_hi) {
    if (!(length_mm > 0.0)) throw ConfigError("beam length must be positive");
    if (!(band_lo <= band_hi)) throw ConfigError("frequency band is empty");
}

namespace {

BeamSection section(std::span<const double> theta) {
    if (theta.size() != 5) throw ArgumentError("beam random vector must be [b, h, t, rho, E]");
    return {theta[0], theta[1], theta[2], theta[3], theta[4]};
}

}  // namespace

bool BoxBeamModel::admissible(std::span<const double>, std::span<const double> theta) const {
    const BeamSection s = section(theta);
    return s.b > 0 && s.h > 0 && s.t > 0 && s.rho > 0 && s.e > 0 && s.b > 2.0 * s.t && s.h > 2.0 * s.t;
}

bool BoxBeamModel::beam_failure(std::span<const double> theta) const {
    const double w = beam_frequency(section(theta), length_);
    return w >= lo_ && w <= hi_;
}

Evaluation BoxBeamModel::do_evaluate(std::span<const double>, std::span<const double> theta) const {
    const double w = beam_frequency(section(theta), length_);
    const double margin = std::max(lo_ - w, w - hi_);
    return {w, margin, w >= lo_ && w <= hi_};
}

StochasticModel beam_stochastic_model() {
    DesignSpace space({30.0, 30.0}, {50.0, 50.0}, {"b_mean", "h_mean"});
    std::vector<RandomVariableSpec> specs{
        RandomVariableSpec::normal("b", Tie::design(0), Tie::design(0, 0.02)),
        RandomVariableSpec::normal("h", Tie::design(1), Tie::design(1, 0.02)),
        RandomVariableSpec::normal("t", Tie::constant(2.0), Tie::constant(0.1)),
        RandomVariableSpec::normal("rho", Tie::constant(7800.0), Tie::constant(156.0)),
        RandomVariableSpec::normal("E", Tie::constant(210.0), Tie::constant(4.2)),
    };
    return StochasticModel(std::move(space), std::move(specs));
}

Evaluation ToyModel::do_evaluate(std::span<const double> phi, std::span<const double> theta) const {
    const double margin = phi[0] - theta[0];
    return {theta[0], margin, margin <= 0.0};
}

StochasticModel toy_stochastic_model() {
    return StochasticModel(DesignSpace({0.0}, {4.0}, {"phi"}),
                           {RandomVariableSpec::normal("theta", Tie::constant(0.0), Tie::constant(1.0))});
}

double toy_analytic_fpf(double phi) { return 0.5 * std::erfc(phi / std::sqrt(2.0)); }

LinearModel::LinearModel(double intercept, std::vector<double> design_coefficients,
                         std::vector<double> random_coefficients)
    : intercept_(intercept), a_(std::move(design_coefficients)), b_(std::move(random_coefficients)) {}

Evaluation LinearModel::do_evaluate(std::span<const double> phi, std::span<const double> theta) const {
    if (phi.size() != a_.size() || theta.size() != b_.size()) throw ArgumentError("linear model dimension mismatch");
    double g = intercept_;
    for (std::size_t i = 0; i < a_.size(); ++i) g += a_[i] * phi[i];
    for (std::size_t j = 0; j < b_.size(); ++j) g += b_[j] * theta[j];
    return {g, g, g <= 0.0};
}

std::vector<std::vector<double>> design_grid(const DesignSpace& space, std::size_t resolution) {
    if (resolution < 2) throw ArgumentError("grid resolution must be at least 2");
    const std::size_t dim = space.dimension();
    std::size_t total = 1;
    for (std::size_t a = 0; a < dim; ++a) total *= resolution;
    std::vector<std::vector<double>> out;
    out.reserve(total);
    for (std::size_t idx = 0; idx < total; ++idx) {
        std::vector<double> x(dim);
        std::size_t rem = idx;
        for (std::size_t a = dim; a-- > 0;) {
            const std::size_t i = rem % resolution;
            rem /= resolution;
            x[a] = i + 1 == resolution
                       ? space.hi(a)
                       : space.lo(a) + static_cast<double>(i) * (space.hi(a) - space.lo(a)) /
                                           static_cast<double>(resolution - 1);
        }
        out.push_back(std::move(x));
    }
    return out;
}

FpfGridOracle grid_dmcs_oracle(const StochasticModel& model, const LimitStateModel& lsm, std::size_t resolution,
                               std::size_t n_per_point, std::uint64_t seed, unsigned threads) {
    if (n_per_point == 0) throw ArgumentError("grid oracle needs at least one sample per point");
    FpfGridOracle out;
    out.resolution = resolution;
    const auto grid = design_grid(model.space(), resolution);
    out.points.resize(grid.size());
    const RandomStream stage = RandomStream::for_stage(seed, Stage::oracle);
    const std::uint64_t before = lsm.evaluations();

    auto run_point = [&](std::size_t i) {
        RandomStream rs = stage.child(i);
        const auto& phi = grid[i];
        const std::size_t nz = model.random_dimension();
        std::vector<double> mean(nz), sd(nz), theta(nz);
        for (std::size_t j = 0; j < nz; ++j) {
            mean[j] = model.resolved_mean(j, phi);
            sd[j] = model.resolved_sd(j, phi);
        }
        std::size_t fails = 0;
        for (std::size_t s = 0; s < n_per_point; ++s) {
            do {
                for (std::size_t j = 0; j < nz; ++j) theta[j] = mean[j] + sd[j] * rs.normal();
            } while (!lsm.admissible(phi, theta));
            if (lsm.evaluate(phi, theta).failed) ++fails;
        }
        GridPoint& p = out.points[i];
        p.phi = grid[i];
        p.n = n_per_point;
        p.pf_hat = static_cast<double>(fails) / static_cast<double>(n_per_point);
        p.cov = fails ? std::sqrt((1.0 - p.pf_hat) / (static_cast<double>(n_per_point) * p.pf_hat))
                      : std::numeric_limits<double>::infinity();
    };
    const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(grid.size())));
    if (workers == 1) {
        for (std::size_t i = 0; i < grid.size(); ++i) run_point(i);
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                for (std::size_t i = w; i < grid.size(); i += workers) run_point(i);
            });
        }
        for (auto& t : pool) t.join();
    }
    out.total_evaluations = lsm.evaluations() - before;
    return out;
}

}  // namespace fpf
