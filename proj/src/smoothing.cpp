#include "fpf/smoothing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include "fpf/errors.hpp"

namespace fpf {

std::vector<SupportPoint> extract_support_points(const RegionChainResult& chain) {
    std::vector<SupportPoint> out;
    for (std::size_t k = 0; k < chain.levels.size(); ++k) {
        const auto& level = chain.levels[k];
        auto add = [&](int leaf) {
            const Box& box = level.density.partition().node(leaf).box;
            auto c = box.center();
            const double v = compose_density(chain, c);
            std::vector<double> extent(box.dimension());
            for (std::size_t a = 0; a < extent.size(); ++a) extent[a] = box.width(a);
            out.push_back({std::move(c), v, k, std::move(extent)});
        };
        for (int leaf : level.split.high_leaves) add(leaf);
        if (k + 1 == chain.levels.size()) {
            for (int leaf : level.split.low_leaves) add(leaf);
        }
    }
    return out;
}

std::vector<double> trend_basis(std::span<const double> u, std::size_t order) {
    std::vector<double> basis{1.0};
    if (order >= 1) basis.insert(basis.end(), u.begin(), u.end());
    if (order >= 2) {
        for (std::size_t a = 0; a < u.size(); ++a) {
            for (std::size_t b = a; b < u.size(); ++b) basis.push_back(u[a] * u[b]);
        }
    }
    return basis;
}

namespace {

constexpr double kSqrtHalfPi = 1.2533141373155003;

// One-dimensional squared-exponential kernel and its averages over
// intervals of width w centered at c. Intervals much narrower than the
// length scale are treated as points.
bool thin(double w, double l) { return w < 1e-3 * l; }

double k_point(double d, double l) { return std::exp(-0.5 * d * d / (l * l)); }

double k_point_cell(double x, double c, double w, double l) {
    if (thin(w, l)) return k_point(x - c, l);
    const double s = std::sqrt(2.0) * l;
    return l * kSqrtHalfPi / w * (std::erf((c + 0.5 * w - x) / s) - std::erf((c - 0.5 * w - x) / s));
}

double dk_point_cell(double x, double c, double w, double l) {
    if (thin(w, l)) return -(x - c) / (l * l) * k_point(x - c, l);
    return (k_point(c - 0.5 * w - x, l) - k_point(c + 0.5 * w - x, l)) / w;
}

// Second antiderivative of the kernel, zero with zero slope at the origin.
double k_second(double d, double l) {
    return l * kSqrtHalfPi * d * std::erf(d / (std::sqrt(2.0) * l)) + l * l * (k_point(d, l) - 1.0);
}

double k_cell_cell(double c1, double w1, double c2, double w2, double l) {
    const bool t1 = thin(w1, l);
    const bool t2 = thin(w2, l);
    if (t1 && t2) return k_point(c1 - c2, l);
    if (t1) return k_point_cell(c1, c2, w2, l);
    if (t2) return k_point_cell(c2, c1, w1, l);
    const double a1 = c1 - 0.5 * w1, b1 = c1 + 0.5 * w1;
    const double a2 = c2 - 0.5 * w2, b2 = c2 + 0.5 * w2;
    const double v = k_second(b1 - a2, l) + k_second(a1 - b2, l) - k_second(b1 - b2, l) - k_second(a1 - a2, l);
    return v / (w1 * w2);
}

// Average of trend_basis over the box centered at c with widths w.
std::vector<double> trend_basis_average(std::span<const double> c, std::span<const double> w, std::size_t order) {
    auto basis = trend_basis(c, order);
    if (order >= 2) {
        std::size_t j = c.size() + 1;
        for (std::size_t a = 0; a < c.size(); ++a) {
            for (std::size_t b = a; b < c.size(); ++b, ++j) {
                if (a == b) basis[j] += w[a] * w[a] / 12.0;
            }
        }
    }
    return basis;
}

struct UnitSupport {
    std::vector<std::vector<double>> centers;
    std::vector<std::vector<double>> widths;
};

Eigen::MatrixXd gram(const UnitSupport& s, std::span<const double> scales, double s2, double noise2) {
    const auto n = static_cast<Eigen::Index>(s.centers.size());
    Eigen::MatrixXd k(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        for (Eigen::Index j = 0; j <= i; ++j) {
            const auto uj = static_cast<std::size_t>(j);
            double v = s2;
            for (std::size_t a = 0; a < scales.size(); ++a) {
                v *= k_cell_cell(s.centers[ui][a], s.widths[ui][a], s.centers[uj][a], s.widths[uj][a], scales[a]);
            }
            k(i, j) = k(j, i) = v;
        }
        k(i, i) += noise2;
    }
    return k;
}

// Leave-one-out predictive score: mean log predictive density of each point
// under the fit to the others; -inf when the system is not numerically
// positive definite.
double loo_score_of(const Eigen::MatrixXd& a, const Eigen::VectorXd& resid, Eigen::VectorXd* loo = nullptr) {
    constexpr double kLog2Pi = 1.8378770664093453;
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
    const Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(a.rows(), a.cols()));
    const Eigen::VectorXd alpha = inv * resid;
    double total = 0.0;
    if (loo) loo->resize(a.rows());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        const double c = inv(i, i);
        if (!(c > 0.0)) return -std::numeric_limits<double>::infinity();
        const double e = alpha(i) / c;
        if (loo) (*loo)(i) = e;
        total += 0.5 * std::log(c) - 0.5 * e * e * c - 0.5 * kLog2Pi;
    }
    const double score = total / static_cast<double>(a.rows());
    return std::isfinite(score) ? score : -std::numeric_limits<double>::infinity();
}

std::size_t order_of(std::size_t terms, std::size_t dim) {
    if (terms == 1) return 0;
    if (terms == dim + 1) return 1;
    if (terms == dim + 1 + dim * (dim + 1) / 2) return 2;
    throw ArgumentError("trend needs constant, linear or full quadratic coefficients");
}

}  // namespace

RegressionSurface::RegressionSurface(Box domain, std::vector<std::vector<double>> locations,
                                     std::vector<std::vector<double>> extents, std::vector<double> log_values,
                                     std::vector<double> length_scales, double signal_variance, double noise,
                                     std::vector<double> trend, std::vector<double> coefficients)
    : domain_(std::move(domain)),
      locations_(std::move(locations)),
      extents_(std::move(extents)),
      log_values_(std::move(log_values)),
      length_scales_(std::move(length_scales)),
      signal_variance_(signal_variance),
      noise_(noise),
      trend_(std::move(trend)),
      coefficients_(std::move(coefficients)) {
    const std::size_t d = domain_.dimension();
    if (locations_.size() != log_values_.size() || locations_.size() != coefficients_.size() ||
        locations_.size() != extents_.size()) {
        throw ArgumentError("surface point, extent, value and coefficient counts differ");
    }
    if (length_scales_.size() != d) throw ArgumentError("one length scale per dimension required");
    order_of(trend_.size(), d);
    for (std::size_t i = 0; i < locations_.size(); ++i) {
        if (locations_[i].size() != d) throw ArgumentError("surface point dimension mismatch");
        unit_centers_.push_back(normalized(locations_[i]));
        std::vector<double> w(d, 0.0);
        if (!extents_[i].empty()) {
            if (extents_[i].size() != d) throw ArgumentError("surface extent dimension mismatch");
            for (std::size_t a = 0; a < d; ++a) w[a] = extents_[i][a] / domain_.width(a);
        }
        unit_widths_.push_back(std::move(w));
    }
}

std::size_t RegressionSurface::trend_order() const noexcept {
    if (trend_.size() == 1) return 0;
    return trend_.size() == domain_.dimension() + 1 ? 1 : 2;
}

std::vector<double> RegressionSurface::normalized(std::span<const double> phi) const {
    std::vector<double> u(phi.size());
    for (std::size_t a = 0; a < u.size(); ++a) u[a] = (phi[a] - domain_.lo[a]) / domain_.width(a);
    return u;
}

double RegressionSurface::log_density(std::span<const double> phi) const {
    const auto u = normalized(phi);
    const auto basis = trend_basis(u, trend_order());
    double f = 0.0;
    for (std::size_t j = 0; j < trend_.size(); ++j) f += trend_[j] * basis[j];
    for (std::size_t j = 0; j < coefficients_.size(); ++j) {
        if (coefficients_[j] == 0.0) continue;
        double k = signal_variance_;
        for (std::size_t a = 0; a < u.size(); ++a) {
            k *= k_point_cell(u[a], unit_centers_[j][a], unit_widths_[j][a], length_scales_[a]);
        }
        f += coefficients_[j] * k;
    }
    return f;
}

double RegressionSurface::cell_average(std::span<const double> phi, std::span<const double> extent) const {
    const auto u = normalized(phi);
    std::vector<double> w(u.size(), 0.0);
    if (!extent.empty()) {
        if (extent.size() != u.size()) throw ArgumentError("extent dimension mismatch");
        for (std::size_t a = 0; a < u.size(); ++a) w[a] = extent[a] / domain_.width(a);
    }
    const auto basis = trend_basis_average(u, w, trend_order());
    double f = 0.0;
    for (std::size_t j = 0; j < trend_.size(); ++j) f += trend_[j] * basis[j];
    for (std::size_t j = 0; j < coefficients_.size(); ++j) {
        if (coefficients_[j] == 0.0) continue;
        double k = signal_variance_;
        for (std::size_t a = 0; a < u.size(); ++a) {
            k *= k_cell_cell(u[a], w[a], unit_centers_[j][a], unit_widths_[j][a], length_scales_[a]);
        }
        f += coefficients_[j] * k;
    }
    return f;
}

std::vector<double> RegressionSurface::log_density_gradient(std::span<const double> phi) const {
    const auto u = normalized(phi);
    const std::size_t d = u.size();
    std::vector<double> g(d, 0.0);
    const std::size_t order = trend_order();
    for (std::size_t a = 0; order >= 1 && a < d; ++a) g[a] = trend_[a + 1];
    if (order >= 2) {
        std::size_t j = d + 1;
        for (std::size_t a = 0; a < d; ++a) {
            for (std::size_t b = a; b < d; ++b, ++j) {
                g[a] += trend_[j] * u[b];
                g[b] += trend_[j] * u[a];
            }
        }
    }
    std::vector<double> k(d), dk(d);
    for (std::size_t j = 0; j < coefficients_.size(); ++j) {
        if (coefficients_[j] == 0.0) continue;
        for (std::size_t a = 0; a < d; ++a) {
            k[a] = k_point_cell(u[a], unit_centers_[j][a], unit_widths_[j][a], length_scales_[a]);
            dk[a] = dk_point_cell(u[a], unit_centers_[j][a], unit_widths_[j][a], length_scales_[a]);
        }
        for (std::size_t a = 0; a < d; ++a) {
            double term = coefficients_[j] * signal_variance_ * dk[a];
            for (std::size_t b = 0; b < d; ++b) {
                if (b != a) term *= k[b];
            }
            g[a] += term;
        }
    }
    for (std::size_t a = 0; a < d; ++a) g[a] /= domain_.width(a);
    return g;
}

RegressionSurface RegressionSurface::fit(std::span<const SupportPoint> points, const Box& domain,
                                         const SurfaceOptions& options) {
    const std::size_t dim = domain.dimension();
    std::vector<std::vector<double>> locs;
    std::vector<std::vector<double>> extents;
    std::vector<double> y;
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto& p = points[i];
        if (p.location.size() != dim) throw ArgumentError("support point dimension mismatch");
        if (!p.extent.empty() && p.extent.size() != dim) throw ArgumentError("support extent dimension mismatch");
        for (double w : p.extent) {
            if (!(w >= 0.0) || !std::isfinite(w)) throw ArgumentError(fmt::format("support point {} has a bad extent", i));
        }
        if (!(p.value > 0.0) || !std::isfinite(p.value)) {
            throw FitError(fmt::format("support point {} has non-positive value {}", i, p.value));
        }
        const double v = std::log(p.value);
        std::size_t j = 0;
        while (j < locs.size() && !(locs[j] == p.location && extents[j] == p.extent)) ++j;
        if (j < locs.size()) {
            if (std::abs(y[j] - v) > 1e-12 * std::max(1.0, std::abs(v))) {
                throw FitError(fmt::format("support points at duplicate location ({}) carry values {} and {}",
                                           fmt::join(p.location, ", "), std::exp(y[j]), p.value));
            }
            continue;
        }
        locs.push_back(p.location);
        extents.push_back(p.extent);
        y.push_back(v);
    }
    if (locs.size() < dim + 1) {
        throw ArgumentError(fmt::format("{} distinct support points; at least {} required", locs.size(), dim + 1));
    }

    const auto n = static_cast<Eigen::Index>(y.size());
    UnitSupport unit;
    for (std::size_t i = 0; i < locs.size(); ++i) {
        std::vector<double> c(dim), w(dim, 0.0);
        for (std::size_t a = 0; a < dim; ++a) {
            c[a] = (locs[i][a] - domain.lo[a]) / domain.width(a);
            if (!extents[i].empty()) w[a] = extents[i][a] / domain.width(a);
        }
        unit.centers.push_back(std::move(c));
        unit.widths.push_back(std::move(w));
    }

    std::vector<double> noises;
    for (double v : options.candidate_noise) {
        if (v > options.noise_floor) noises.push_back(v);
    }
    noises.insert(noises.begin(), options.noise_floor);
    if (!options.select_noise) noises.resize(1);
    if (!options.length_scales.empty() && options.length_scales.size() != dim) {
        throw ArgumentError("one length scale per dimension required");
    }
    if (options.length_scales.empty() && options.candidate_scales.empty()) {
        throw ArgumentError("no candidate length scales");
    }

    struct Candidate {
        std::vector<double> trend;
        Eigen::VectorXd resid;
        double s2 = 0.0;
        std::vector<double> scales;
        double noise = 0.0;
        double score = -std::numeric_limits<double>::infinity();
    };

    // Least-squares mean function of the given order, matched to the cell
    // averages.
    auto detrend = [&](std::size_t order) {
        Candidate c;
        const auto terms = static_cast<Eigen::Index>(trend_basis(unit.centers[0], order).size());
        Eigen::MatrixXd design(n, terms);
        Eigen::VectorXd target(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto ui = static_cast<std::size_t>(i);
            const auto basis = trend_basis_average(unit.centers[ui], unit.widths[ui], order);
            for (Eigen::Index j = 0; j < terms; ++j) design(i, j) = basis[static_cast<std::size_t>(j)];
            target(i) = y[ui];
        }
        const Eigen::VectorXd beta = design.colPivHouseholderQr().solve(target);
        c.trend.assign(beta.data(), beta.data() + beta.size());
        c.resid = target - design * beta;
        c.s2 = c.resid.squaredNorm() / static_cast<double>(n);
        return c;
    };

    auto tune = [&](Candidate& c) {
        auto consider = [&](const std::vector<double>& trial, double trial_noise) {
            const double s = loo_score_of(gram(unit, trial, c.s2, trial_noise * trial_noise), c.resid);
            if (s > c.score) {
                c.score = s;
                c.scales = trial;
                c.noise = trial_noise;
            }
        };
        if (!options.length_scales.empty()) {
            for (double v : noises) consider(options.length_scales, v);
            return;
        }
        const auto& grid = options.candidate_scales;
        for (double v : noises) {
            for (double l : grid) consider(std::vector<double>(dim, l), v);
        }
        if (!std::isfinite(c.score)) return;
        for (std::size_t sweep = 0; sweep < options.sweeps; ++sweep) {
            for (std::size_t a = 0; dim > 1 && a < dim; ++a) {
                const auto base = c.scales;
                const double base_noise = c.noise;
                for (double l : grid) {
                    if (l == base[a]) continue;
                    auto trial = base;
                    trial[a] = l;
                    consider(trial, base_noise);
                }
            }
            const auto base = c.scales;
            const double base_noise = c.noise;
            for (double v : noises) {
                if (v != base_noise) consider(base, v);
            }
        }
    };

    Candidate chosen;
    bool any_order = false;
    for (std::size_t order : options.trend_orders) {
        if (order > 2) throw ArgumentError("trend order must be 0, 1 or 2");
        const std::size_t terms = trend_basis(unit.centers[0], order).size();
        if (order > 0 && y.size() < 2 * terms) continue;
        any_order = true;
        Candidate c = detrend(order);
        if (c.s2 < 1e-24) {
            std::vector<double> scales = options.length_scales.empty() ? std::vector<double>(dim, 1.0) : options.length_scales;
            return RegressionSurface(domain, std::move(locs), std::move(extents), std::move(y), std::move(scales), 0.0,
                                     options.noise_floor, std::move(c.trend),
                                     std::vector<double>(static_cast<std::size_t>(n), 0.0));
        }
        tune(c);
        if (c.score > chosen.score) chosen = std::move(c);
    }
    if (!any_order) throw ArgumentError("no trend order fits the number of support points");
    if (!std::isfinite(chosen.score)) throw FitError("no candidate hyperparameters give a positive definite kernel");

    const Eigen::MatrixXd a = gram(unit, chosen.scales, chosen.s2, chosen.noise * chosen.noise);
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success) throw FitError("kernel matrix is not positive definite");
    const Eigen::VectorXd coef = llt.solve(chosen.resid);
    RegressionSurface out(domain, std::move(locs), std::move(extents), std::move(y), std::move(chosen.scales), chosen.s2,
                          chosen.noise, std::move(chosen.trend),
                          std::vector<double>(coef.data(), coef.data() + coef.size()));
    out.loo_score = chosen.score;
    return out;
}

std::vector<double> loo_residuals(const RegressionSurface& surface) {
    const auto& locs = surface.locations();
    const auto& dom = surface.domain();
    const std::size_t dim = dom.dimension();
    if (surface.signal_variance() == 0.0) return std::vector<double>(locs.size(), 0.0);
    UnitSupport unit;
    const auto n = static_cast<Eigen::Index>(locs.size());
    Eigen::VectorXd resid(n);
    for (std::size_t i = 0; i < locs.size(); ++i) {
        std::vector<double> c(dim), w(dim, 0.0);
        for (std::size_t a = 0; a < dim; ++a) {
            c[a] = (locs[i][a] - dom.lo[a]) / dom.width(a);
            if (!surface.extents()[i].empty()) w[a] = surface.extents()[i][a] / dom.width(a);
        }
        const auto basis = trend_basis_average(c, w, surface.trend_order());
        double t = 0.0;
        for (std::size_t j = 0; j < basis.size(); ++j) t += surface.trend()[j] * basis[j];
        resid(static_cast<Eigen::Index>(i)) = surface.log_values()[i] - t;
        unit.centers.push_back(std::move(c));
        unit.widths.push_back(std::move(w));
    }
    const double noise2 = surface.noise() * surface.noise();
    Eigen::VectorXd loo;
    loo_score_of(gram(unit, surface.length_scales(), surface.signal_variance(), noise2), resid, &loo);
    return std::vector<double>(loo.data(), loo.data() + loo.size());
}

double smoothed_fpf(const RegressionSurface& surface, double p_failure, double prior_density,
                    std::span<const double> phi) {
    if (!surface.domain().contains(phi)) throw UndefinedQuery("smoothed failure probability queried outside the design space");
    return scale_to_fpf(std::exp(surface.log_density(phi)), p_failure, prior_density);
}

FpfGradient fpf_gradient(const RegressionSurface& surface, double p_failure, double prior_density,
                         std::span<const double> phi) {
    const Box& dom = surface.domain();
    if (!dom.contains(phi)) throw UndefinedQuery("gradient queried outside the design space");
    FpfGradient out;
    for (std::size_t a = 0; a < phi.size(); ++a) {
        if (phi[a] <= dom.lo[a] || phi[a] >= dom.hi[a]) out.on_boundary = true;
    }
    const double f = smoothed_fpf(surface, p_failure, prior_density, phi);
    out.value = surface.log_density_gradient(phi);
    for (auto& g : out.value) g *= f;
    return out;
}

}  // namespace fpf
