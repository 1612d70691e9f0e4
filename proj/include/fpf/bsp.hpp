#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "fpf/geometry.hpp"
#include "fpf/random.hpp"

namespace fpf {

/// Binary partition of a box by midpoint cuts. Nodes are stored flat; node 0
/// is the root. Leaves may be inactive (outside the region being estimated):
/// inactive leaves carry no mass, take no part in scoring and are never cut.
class BinaryPartition {
public:
    struct Node {
        Box box;
        int depth = 0;
        int axis = -1;  // -1 for leaves
        int lower = -1;
        int upper = -1;
        std::size_t count = 0;
        bool active = true;
    };

    explicit BinaryPartition(Box domain);

    const Box& domain() const noexcept { return nodes_.front().box; }
    const std::vector<Node>& nodes() const noexcept { return nodes_; }
    const Node& node(int i) const { return nodes_.at(static_cast<std::size_t>(i)); }
    bool is_leaf(int i) const { return node(i).axis < 0; }

    /// Leaves in depth-first order, lower child first.
    std::vector<int> leaves() const;
    std::vector<int> active_leaves() const;
    std::size_t leaf_count() const;
    std::size_t internal_count() const;

    /// Exact cell volume: the domain volume halved once per cut above the node.
    double volume(int i) const;
    /// Containing leaf, or -1 outside the closed domain. Points on a cut
    /// plane go to the upper child.
    int locate(std::span<const double> x) const;

    /// Splits `leaf` at its midpoint along `axis`; children inherit the active
    /// flag and start with zero counts. Returns (lower, upper).
    std::pair<int, int> split(int leaf, int axis);
    void set_active(int leaf, bool active);
    /// Overwrites a stored count; used when reloading a saved partition.
    void set_count(int node, std::size_t count);
    /// Recomputes counts of every node from `samples`. Throws ArgumentError if
    /// a sample is outside the domain or falls in an inactive leaf.
    void recount(const PointSet& samples);
    /// Sum of counts over active leaves.
    std::size_t total_count() const;

private:
    std::vector<Node> nodes_;
};

/// Copy of `p` with `leaf` split along `axis`, counts re-binned from `samples`.
BinaryPartition propose_cut(const BinaryPartition& p, int leaf, int axis, const PointSet& samples);

/// Log posterior of a partition up to a global constant:
///   -beta t + log B(n + alpha) - log B(alpha, ..., alpha) - sum n_i log|A_i|
/// over the t active leaves.
double log_partition_score(const BinaryPartition& p, double alpha, double beta);

/// Piecewise-constant density over the active leaves of a partition.
class PiecewiseConstantDensity {
public:
    /// Posterior-mean masses (n_i + alpha) / (N + t alpha) on active leaves.
    PiecewiseConstantDensity(BinaryPartition partition, double alpha);
    /// Explicit per-node masses (zero for internal and inactive nodes).
    PiecewiseConstantDensity(BinaryPartition partition, std::vector<double> node_masses);

    const BinaryPartition& partition() const noexcept { return partition_; }
    double mass(int node) const { return masses_.at(static_cast<std::size_t>(node)); }
    double leaf_density(int node) const { return mass(node) / partition_.volume(node); }
    const std::vector<double>& masses() const noexcept { return masses_; }

    double operator()(std::span<const double> x) const;
    double total_mass() const;
    /// Sum of p_i |A_i| over leaves.
    double integral() const;

    double log_score = 0.0;

private:
    BinaryPartition partition_;
    std::vector<double> masses_;
};

inline double density_value(const PiecewiseConstantDensity& d, std::span<const double> x) { return d(x); }

struct BspOptions {
    double alpha = 0.5;
    std::optional<double> beta;  // default log N
    std::size_t particles = 100;
    std::size_t max_leaves = 256;
    std::size_t patience = 2;
    std::size_t max_depth = 40;
    /// Smallest child cell allowed by a cut, as the number of samples it
    /// would hold if the samples were spread uniformly over the active
    /// region. Repeated chain states otherwise draw cuts without limit.
    double min_cell_samples = 3.0;
};

struct BspDiagnostics {
    std::size_t levels = 0;
    std::size_t resamplings = 0;
    double beta = 0.0;
};

/// Bayesian sequential partitioning over `domain` by sequential importance
/// sampling of cuts. Returns the highest-scoring partition seen.
PiecewiseConstantDensity bsp_estimate(const PointSet& samples, const Box& domain, const BspOptions& options,
                                      RandomStream& stream, BspDiagnostics* diagnostics = nullptr);

/// Same, starting from `initial` and refining only its active leaves.
PiecewiseConstantDensity bsp_refine(const PointSet& samples, const BinaryPartition& initial,
                                    const BspOptions& options, RandomStream& stream,
                                    BspDiagnostics* diagnostics = nullptr);

}  // namespace fpf
