#include "fpf/bsp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <unordered_map>

#include <fmt/format.h>

#include "fpf/errors.hpp"

namespace fpf {

BinaryPartition::BinaryPartition(Box domain) {
    if (domain.dimension() == 0 || !(domain.volume() > 0.0)) throw ArgumentError("partition domain must have volume");
    nodes_.push_back(Node{std::move(domain)});
}

std::vector<int> BinaryPartition::leaves() const {
    std::vector<int> out;
    std::vector<int> stack{0};
    while (!stack.empty()) {
        const int i = stack.back();
        stack.pop_back();
        const Node& n = nodes_[static_cast<std::size_t>(i)];
        if (n.axis < 0) {
            out.push_back(i);
        } else {
            stack.push_back(n.upper);
            stack.push_back(n.lower);
        }
    }
    return out;
}

std::vector<int> BinaryPartition::active_leaves() const {
    auto all = leaves();
    std::erase_if(all, [&](int i) { return !nodes_[static_cast<std::size_t>(i)].active; });
    return all;
}

std::size_t BinaryPartition::leaf_count() const {
    return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.axis < 0; }));
}

std::size_t BinaryPartition::internal_count() const { return nodes_.size() - leaf_count(); }

double BinaryPartition::volume(int i) const { return std::ldexp(domain().volume(), -node(i).depth); }

int BinaryPartition::locate(std::span<const double> x) const {
    if (!domain().contains(x)) return -1;
    int i = 0;
    while (nodes_[static_cast<std::size_t>(i)].axis >= 0) {
        const Node& n = nodes_[static_cast<std::size_t>(i)];
        const auto a = static_cast<std::size_t>(n.axis);
        const double mid = nodes_[static_cast<std::size_t>(n.lower)].box.hi[a];
        i = x[a] < mid ? n.lower : n.upper;
    }
    return i;
}

std::pair<int, int> BinaryPartition::split(int leaf, int axis) {
    if (!is_leaf(leaf)) throw ArgumentError(fmt::format("node {} is not a leaf", leaf));
    if (axis < 0 || static_cast<std::size_t>(axis) >= domain().dimension()) {
        throw ArgumentError(fmt::format("cut axis {} out of range", axis));
    }
    const auto a = static_cast<std::size_t>(axis);
    Node lower = nodes_[static_cast<std::size_t>(leaf)];
    Node upper = lower;
    const double mid = 0.5 * (lower.box.lo[a] + lower.box.hi[a]);
    lower.box.hi[a] = mid;
    upper.box.lo[a] = mid;
    for (Node* c : {&lower, &upper}) {
        c->depth += 1;
        c->count = 0;
        c->axis = c->lower = c->upper = -1;
    }
    const int li = static_cast<int>(nodes_.size());
    nodes_.push_back(std::move(lower));
    nodes_.push_back(std::move(upper));
    Node& parent = nodes_[static_cast<std::size_t>(leaf)];
    parent.axis = axis;
    parent.lower = li;
    parent.upper = li + 1;
    return {li, li + 1};
}

void BinaryPartition::set_active(int leaf, bool active) {
    if (!is_leaf(leaf)) throw ArgumentError(fmt::format("node {} is not a leaf", leaf));
    nodes_[static_cast<std::size_t>(leaf)].active = active;
}

void BinaryPartition::set_count(int node, std::size_t count) {
    nodes_.at(static_cast<std::size_t>(node)).count = count;
}

void BinaryPartition::recount(const PointSet& samples) {
    for (auto& n : nodes_) n.count = 0;
    for (std::size_t s = 0; s < samples.size(); ++s) {
        const auto x = samples[s];
        if (!domain().contains(x)) throw ArgumentError(fmt::format("sample {} lies outside the partition domain", s));
        int i = 0;
        for (;;) {
            Node& n = nodes_[static_cast<std::size_t>(i)];
            ++n.count;
            if (n.axis < 0) break;
            const auto a = static_cast<std::size_t>(n.axis);
            i = x[a] < nodes_[static_cast<std::size_t>(n.lower)].box.hi[a] ? n.lower : n.upper;
        }
        if (!nodes_[static_cast<std::size_t>(i)].active) {
            throw ArgumentError(fmt::format("sample {} lies outside the active region", s));
        }
    }
}

std::size_t BinaryPartition::total_count() const {
    std::size_t n = 0;
    for (int i : active_leaves()) n += node(i).count;
    return n;
}

BinaryPartition propose_cut(const BinaryPartition& p, int leaf, int axis, const PointSet& samples) {
    BinaryPartition out = p;
    out.split(leaf, axis);
    out.recount(samples);
    return out;
}

double log_partition_score(const BinaryPartition& p, double alpha, double beta) {
    const auto leaves = p.active_leaves();
    const double t = static_cast<double>(leaves.size());
    double n_total = 0.0;
    double score = -beta * t;
    for (int i : leaves) {
        const double n = static_cast<double>(p.node(i).count);
        n_total += n;
        score += std::lgamma(n + alpha);
        if (n > 0.0) score -= n * std::log(p.volume(i));
    }
    score -= std::lgamma(n_total + t * alpha);
    score -= t * std::lgamma(alpha) - std::lgamma(t * alpha);
    return score;
}

PiecewiseConstantDensity::PiecewiseConstantDensity(BinaryPartition partition, double alpha)
    : partition_(std::move(partition)), masses_(partition_.nodes().size(), 0.0) {
    const auto leaves = partition_.active_leaves();
    const double denom = static_cast<double>(partition_.total_count()) + static_cast<double>(leaves.size()) * alpha;
    for (int i : leaves) {
        masses_[static_cast<std::size_t>(i)] = (static_cast<double>(partition_.node(i).count) + alpha) / denom;
    }
}

PiecewiseConstantDensity::PiecewiseConstantDensity(BinaryPartition partition, std::vector<double> node_masses)
    : partition_(std::move(partition)), masses_(std::move(node_masses)) {
    if (masses_.size() != partition_.nodes().size()) throw ArgumentError("mass vector does not match partition");
    for (std::size_t i = 0; i < masses_.size(); ++i) {
        if (masses_[i] < 0.0) throw ArgumentError("negative cell mass");
    }
}

double PiecewiseConstantDensity::operator()(std::span<const double> x) const {
    const int leaf = partition_.locate(x);
    return leaf < 0 ? 0.0 : leaf_density(leaf);
}

double PiecewiseConstantDensity::total_mass() const {
    double s = 0.0;
    for (int i : partition_.leaves()) s += mass(i);
    return s;
}

double PiecewiseConstantDensity::integral() const {
    double s = 0.0;
    for (int i : partition_.leaves()) s += leaf_density(i) * partition_.volume(i);
    return s;
}

namespace {

// A dyadic cell of the sampling lattice, shared between particles. Children
// are created on first use and cached.
struct Cell {
    Box box;
    int depth = 0;
    std::vector<std::uint32_t> members;
    std::vector<double> cut_gain;  // per axis: local change of the log score from cutting
    std::vector<std::array<std::shared_ptr<Cell>, 2>> children;
};

class Lattice {
public:
    Lattice(const PointSet& samples, double alpha) : samples_(samples), alpha_(alpha) {}

    std::shared_ptr<Cell> make(Box box, int depth, std::vector<std::uint32_t> members) const {
        auto c = std::make_shared<Cell>();
        c->box = std::move(box);
        c->depth = depth;
        c->members = std::move(members);
        const std::size_t d = c->box.dimension();
        c->children.resize(d);
        c->cut_gain.resize(d);
        const double n = static_cast<double>(c->members.size());
        for (std::size_t a = 0; a < d; ++a) {
            const double mid = 0.5 * (c->box.lo[a] + c->box.hi[a]);
            std::size_t lower = 0;
            for (auto m : c->members) lower += samples_[m][a] < mid ? 1 : 0;
            const double nl = static_cast<double>(lower);
            c->cut_gain[a] = std::lgamma(nl + alpha_) + std::lgamma(n - nl + alpha_) - std::lgamma(n + alpha_) +
                             n * std::log(2.0);
        }
        return c;
    }

    const std::array<std::shared_ptr<Cell>, 2>& split(Cell& c, std::size_t a) const {
        auto& kids = c.children[a];
        if (kids[0]) return kids;
        const double mid = 0.5 * (c.box.lo[a] + c.box.hi[a]);
        std::vector<std::uint32_t> lo_members, hi_members;
        for (auto m : c.members) (samples_[m][a] < mid ? lo_members : hi_members).push_back(m);
        Box lo_box = c.box, hi_box = c.box;
        lo_box.hi[a] = mid;
        hi_box.lo[a] = mid;
        kids[0] = make(std::move(lo_box), c.depth + 1, std::move(lo_members));
        kids[1] = make(std::move(hi_box), c.depth + 1, std::move(hi_members));
        return kids;
    }

private:
    const PointSet& samples_;
    double alpha_;
};

struct Cut {
    const Cell* cell;
    int axis;
};

struct Particle {
    std::vector<std::shared_ptr<Cell>> leaves;  // active leaves only
    std::vector<Cut> cuts;
    double score = 0.0;
    double log_weight = 0.0;
};

// Change of the leaf-count-dependent part of the score when t -> t + 1.
double count_term(double n_total, double t, double alpha, double beta) {
    return -beta - std::lgamma(n_total + (t + 1.0) * alpha) + std::lgamma(n_total + t * alpha) - std::lgamma(alpha) +
           std::lgamma((t + 1.0) * alpha) - std::lgamma(t * alpha);
}

double log_sum_exp(std::span<const double> v) {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : v) m = std::max(m, x);
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

void systematic_resample(std::vector<Particle>& particles, RandomStream& stream) {
    const std::size_t m = particles.size();
    std::vector<double> lw(m);
    for (std::size_t i = 0; i < m; ++i) lw[i] = particles[i].log_weight;
    const double lse = log_sum_exp(lw);
    std::vector<Particle> next;
    next.reserve(m);
    const double u0 = stream.uniform() / static_cast<double>(m);
    double cumulative = std::exp(lw[0] - lse);
    std::size_t i = 0;
    for (std::size_t j = 0; j < m; ++j) {
        const double u = u0 + static_cast<double>(j) / static_cast<double>(m);
        while (u > cumulative && i + 1 < m) {
            ++i;
            cumulative += std::exp(lw[i] - lse);
        }
        next.push_back(particles[i]);
        next.back().log_weight = 0.0;
    }
    particles = std::move(next);
}

double effective_sample_size(const std::vector<Particle>& particles) {
    std::vector<double> lw;
    lw.reserve(particles.size());
    for (const auto& p : particles) lw.push_back(p.log_weight);
    const double lse = log_sum_exp(lw);
    double s2 = 0.0;
    for (double x : lw) {
        const double w = std::exp(x - lse);
        s2 += w * w;
    }
    return 1.0 / s2;
}

PiecewiseConstantDensity run_sis(const PointSet& samples, const BinaryPartition& initial, const BspOptions& options,
                                 RandomStream& stream, BspDiagnostics* diagnostics) {
    if (samples.empty()) throw ArgumentError("density estimation needs at least one sample");
    if (options.particles == 0) throw ArgumentError("density estimation needs at least one particle");
    if (!(options.alpha > 0.0)) throw ArgumentError("Dirichlet parameter must be positive");

    BinaryPartition base = initial;
    base.recount(samples);  // validates domain and region membership

    const double alpha = options.alpha;
    const double n_total = static_cast<double>(samples.size());
    const double beta = options.beta.value_or(std::log(n_total));
    if (diagnostics) diagnostics->beta = beta;

    // Build the lattice image of the initial tree.
    Lattice lattice(samples, alpha);
    std::vector<std::uint32_t> all(samples.size());
    for (std::uint32_t i = 0; i < all.size(); ++i) all[i] = i;
    std::unordered_map<int, std::shared_ptr<Cell>> node_cell;
    node_cell[0] = lattice.make(base.domain(), 0, std::move(all));
    Particle start;
    for (std::size_t k = 0; k < base.nodes().size(); ++k) {
        const int i = static_cast<int>(k);
        const auto& n = base.node(i);
        auto& cell = node_cell.at(i);
        if (n.axis >= 0) {
            const auto& kids = lattice.split(*cell, static_cast<std::size_t>(n.axis));
            node_cell[n.lower] = kids[0];
            node_cell[n.upper] = kids[1];
        }
    }
    for (int i : base.active_leaves()) start.leaves.push_back(node_cell.at(i));
    if (start.leaves.empty()) throw ArgumentError("initial partition has no active leaf");
    start.score = log_partition_score(base, alpha, beta);
    double active_volume = 0.0;
    for (int i : base.active_leaves()) active_volume += base.volume(i);
    const double min_volume = 2.0 * options.min_cell_samples * active_volume / n_total;

    std::vector<Particle> particles(options.particles, start);
    Particle best = start;
    std::size_t stale = 0;
    std::vector<double> gains;
    std::vector<std::pair<std::size_t, std::size_t>> moves;

    while (best.leaves.size() < options.max_leaves && particles.front().leaves.size() < options.max_leaves) {
        const double t = static_cast<double>(particles.front().leaves.size());
        const double shared = count_term(n_total, t, alpha, beta);
        bool any_move = false;
        for (auto& p : particles) {
            gains.clear();
            moves.clear();
            for (std::size_t l = 0; l < p.leaves.size(); ++l) {
                const Cell& c = *p.leaves[l];
                if (static_cast<std::size_t>(c.depth) >= options.max_depth) continue;
                if (c.box.volume() < min_volume) continue;
                for (std::size_t a = 0; a < c.box.dimension(); ++a) {
                    gains.push_back(shared + c.cut_gain[a]);
                    moves.emplace_back(l, a);
                }
            }
            if (moves.empty()) {
                p.log_weight = -std::numeric_limits<double>::infinity();
                continue;
            }
            any_move = true;
            const double lse = log_sum_exp(gains);
            double u = stream.uniform();
            std::size_t pick = moves.size() - 1;
            for (std::size_t c = 0; c < moves.size(); ++c) {
                u -= std::exp(gains[c] - lse);
                if (u < 0.0) {
                    pick = c;
                    break;
                }
            }
            const auto [l, a] = moves[pick];
            std::shared_ptr<Cell> parent = p.leaves[l];
            const auto& kids = lattice.split(*parent, a);
            p.leaves[l] = kids[0];
            p.leaves.insert(p.leaves.begin() + static_cast<std::ptrdiff_t>(l) + 1, kids[1]);
            p.cuts.push_back({parent.get(), static_cast<int>(a)});
            p.score += gains[pick];
            p.log_weight += lse;
        }
        if (!any_move) break;
        if (diagnostics) ++diagnostics->levels;

        const auto level_best = std::max_element(particles.begin(), particles.end(),
                                                 [](const Particle& a, const Particle& b) { return a.score < b.score; });
        if (level_best->score > best.score) {
            best = *level_best;
            stale = 0;
        } else if (++stale >= options.patience) {
            break;
        }
        if (effective_sample_size(particles) < 0.5 * static_cast<double>(particles.size())) {
            systematic_resample(particles, stream);
            if (diagnostics) ++diagnostics->resamplings;
        }
    }

    // Replay the winning cut sequence onto the initial tree.
    BinaryPartition out = base;
    std::unordered_map<const Cell*, int> cell_node;
    for (const auto& [node, cell] : node_cell) cell_node[cell.get()] = node;
    for (const Cut& cut : best.cuts) {
        const int node = cell_node.at(cut.cell);
        const auto [lo, hi] = out.split(node, cut.axis);
        const auto& kids = cut.cell->children[static_cast<std::size_t>(cut.axis)];
        cell_node[kids[0].get()] = lo;
        cell_node[kids[1].get()] = hi;
    }
    out.recount(samples);
    PiecewiseConstantDensity density(std::move(out), alpha);
    density.log_score = best.score;
    return density;
}

}  // namespace

PiecewiseConstantDensity bsp_estimate(const PointSet& samples, const Box& domain, const BspOptions& options,
                                      RandomStream& stream, BspDiagnostics* diagnostics) {
    return run_sis(samples, BinaryPartition(domain), options, stream, diagnostics);
}

PiecewiseConstantDensity bsp_refine(const PointSet& samples, const BinaryPartition& initial,
                                    const BspOptions& options, RandomStream& stream, BspDiagnostics* diagnostics) {
    return run_sis(samples, initial, options, stream, diagnostics);
}

}  // namespace fpf
