#include "fpf/design_opt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>

#include <fmt/format.h>

#include "fpf/errors.hpp"

namespace fpf {

double objective_mean_area(std::span<const double> phi, double mean_thickness) {
    if (phi.size() != 2) throw ArgumentError("mean area objective needs [b, h]");
    const double b = phi[0];
    const double h = phi[1];
    const double t = mean_thickness;
    if (!(t >= 0.0) || !(b > 2.0 * t) || !(h > 2.0 * t)) {
        throw ArgumentError(fmt::format("wall thickness {} collapses section {} x {}", t, b, h));
    }
    return b * h - (b - 2.0 * t) * (h - 2.0 * t);
}

namespace {

constexpr double kSlack = 1e-6;

struct Point {
    std::vector<double> x;
    double objective = 0.0;
    double constraint = 0.0;
    double merit = 0.0;
};

class Search {
public:
    Search(const DesignProblem& p, const OptimizeOptions& o) : problem_(p), options_(o) {}

    Point evaluate(std::vector<double> x) {
        for (std::size_t a = 0; a < x.size(); ++a) x[a] = std::clamp(x[a], problem_.bounds.lo[a], problem_.bounds.hi[a]);
        Point p;
        p.objective = problem_.objective(x);
        p.constraint = problem_.failure_probability(x);
        const double violation = p.constraint > 0.0 ? std::max(0.0, std::log(p.constraint / problem_.allowable)) : 0.0;
        p.merit = p.objective + options_.penalty * violation;
        p.x = std::move(x);
        ++evaluations_;
        if (feasible(p) && (!best_feasible_ || better(p, *best_feasible_))) best_feasible_ = p;
        return p;
    }

    bool feasible(const Point& p) const { return p.constraint <= problem_.allowable * (1.0 + kSlack); }

    static bool better(const Point& a, const Point& b) {
        const double tol = 1e-12 * (1.0 + std::abs(b.objective));
        if (a.objective < b.objective - tol) return true;
        if (a.objective > b.objective + tol) return false;
        return a.x < b.x;
    }

    Point nelder_mead(const std::vector<double>& start) {
        const std::size_t n = start.size();
        std::vector<Point> simplex;
        simplex.push_back(evaluate(start));
        for (std::size_t a = 0; a < n; ++a) {
            std::vector<double> x = start;
            const double step = 0.1 * problem_.bounds.width(a);
            x[a] = x[a] + step <= problem_.bounds.hi[a] ? x[a] + step : x[a] - step;
            simplex.push_back(evaluate(std::move(x)));
        }
        auto order = [&] {
            std::sort(simplex.begin(), simplex.end(), [](const Point& l, const Point& r) {
                return l.merit < r.merit || (l.merit == r.merit && l.x < r.x);
            });
        };
        const std::size_t budget = evaluations_ + options_.max_evaluations;
        while (evaluations_ < budget) {
            order();
            const double spread = simplex.back().merit - simplex.front().merit;
            double size = 0.0;
            for (const auto& p : simplex) {
                for (std::size_t a = 0; a < n; ++a) {
                    size = std::max(size, std::abs(p.x[a] - simplex.front().x[a]) / problem_.bounds.width(a));
                }
            }
            if (spread <= options_.tolerance * (1.0 + std::abs(simplex.front().merit)) && size < 1e-9) break;

            std::vector<double> centroid(n, 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t a = 0; a < n; ++a) centroid[a] += simplex[i].x[a] / static_cast<double>(n);
            }
            auto along = [&](double t) {
                std::vector<double> x(n);
                for (std::size_t a = 0; a < n; ++a) x[a] = centroid[a] + t * (simplex.back().x[a] - centroid[a]);
                return x;
            };
            Point reflected = evaluate(along(-1.0));
            if (reflected.merit < simplex.front().merit) {
                Point expanded = evaluate(along(-2.0));
                simplex.back() = expanded.merit < reflected.merit ? std::move(expanded) : std::move(reflected);
            } else if (reflected.merit < simplex[n - 1].merit) {
                simplex.back() = std::move(reflected);
            } else {
                const bool outside = reflected.merit < simplex.back().merit;
                Point contracted = evaluate(along(outside ? -0.5 : 0.5));
                if (contracted.merit < std::min(reflected.merit, simplex.back().merit)) {
                    simplex.back() = std::move(contracted);
                } else {
                    for (std::size_t i = 1; i <= n; ++i) {
                        std::vector<double> x(n);
                        for (std::size_t a = 0; a < n; ++a) x[a] = 0.5 * (simplex[0].x[a] + simplex[i].x[a]);
                        simplex[i] = evaluate(std::move(x));
                    }
                }
            }
        }
        order();
        return simplex.front();
    }

    // Moves an infeasible point toward `anchor` (feasible) until it is feasible.
    Point repair(const Point& infeasible, const Point& anchor) {
        Point lo = anchor;
        Point hi = infeasible;
        for (int it = 0; it < 60; ++it) {
            std::vector<double> mid(lo.x.size());
            for (std::size_t a = 0; a < mid.size(); ++a) mid[a] = 0.5 * (lo.x[a] + hi.x[a]);
            Point m = evaluate(std::move(mid));
            (feasible(m) ? lo : hi) = std::move(m);
        }
        return lo;
    }

    void reset_best() { best_feasible_.reset(); }
    const std::optional<Point>& best_feasible() const { return best_feasible_; }

private:
    const DesignProblem& problem_;
    const OptimizeOptions& options_;
    std::size_t evaluations_ = 0;
    std::optional<Point> best_feasible_;
};

}  // namespace

OptimalDesign optimize(const DesignProblem& problem, const OptimizeOptions& options, RandomStream& stream) {
    if (!(problem.allowable > 0.0 && problem.allowable < 1.0)) throw ArgumentError("allowable failure probability not in (0, 1)");
    const Box& box = problem.bounds;
    const std::size_t dim = box.dimension();
    if (dim == 0) throw ArgumentError("design bounds are empty");

    std::vector<std::vector<double>> starts;
    const std::size_t g = std::max<std::size_t>(options.grid_per_dim, 1);
    std::size_t total = 1;
    for (std::size_t a = 0; a < dim; ++a) total *= g;
    for (std::size_t idx = 0; idx < total; ++idx) {
        std::vector<double> x(dim);
        std::size_t rem = idx;
        for (std::size_t a = dim; a-- > 0;) {
            const std::size_t i = rem % g;
            rem /= g;
            x[a] = box.lo[a] + (static_cast<double>(i) + 0.5) / static_cast<double>(g) * box.width(a);
        }
        starts.push_back(std::move(x));
    }
    for (std::size_t r = 0; r < options.random_starts; ++r) {
        std::vector<double> x(dim);
        for (std::size_t a = 0; a < dim; ++a) x[a] = stream.uniform(box.lo[a], box.hi[a]);
        starts.push_back(std::move(x));
    }

    Search search(problem, options);
    OptimalDesign result;
    std::optional<Point> best;
    std::optional<Point> least_violating;
    for (std::size_t s = 0; s < starts.size(); ++s) {
        search.reset_best();
        Point p = search.nelder_mead(starts[s]);
        p = search.nelder_mead(p.x);  // restart from the converged point
        if (!search.feasible(p) && search.best_feasible()) p = search.repair(p, *search.best_feasible());
        if (search.best_feasible() && Search::better(*search.best_feasible(), p)) p = *search.best_feasible();
        const bool ok = search.feasible(p);
        result.trace.push_back({s, p.x, p.objective, p.constraint, ok});
        if (ok) {
            if (!best || Search::better(p, *best)) best = p;
        } else if (!least_violating || p.constraint < least_violating->constraint) {
            least_violating = p;
        }
    }
    if (!best) {
        throw Infeasible(fmt::format("no start reached failure probability <= {}", problem.allowable),
                         least_violating->x, least_violating->constraint / problem.allowable - 1.0);
    }
    result.phi = best->x;
    result.objective = best->objective;
    result.constraint = best->constraint;
    result.active = best->constraint >= 0.99 * problem.allowable;
    return result;
}

}  // namespace fpf
