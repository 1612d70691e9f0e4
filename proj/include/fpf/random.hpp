#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace fpf {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Counter-based split: the seed of stream `index` under `parent`.
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) noexcept {
    return mix64(mix64(parent) ^ mix64(index + 0x632be59bd9b4e019ULL));
}

/// Top-level stage identifiers. Each stage stream is derive_seed(master, stage).
enum class Stage : std::uint64_t {
    sampling = 1,
    pilot = 2,
    populate = 3,
    partition = 4,
    optimize = 5,
    oracle = 6,
};

/// A seeded random stream. Streams never share state; child(i) gives an
/// independent stream whose seed depends only on this stream's seed and i.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed) : seed_(seed), engine_(mix64(seed)) {}

    static RandomStream for_stage(std::uint64_t master, Stage stage) {
        return RandomStream(derive_seed(master, static_cast<std::uint64_t>(stage)));
    }

    std::uint64_t seed() const noexcept { return seed_; }
    RandomStream child(std::uint64_t index) const { return RandomStream(derive_seed(seed_, index)); }

    /// Uniform on [0, 1).
    double uniform() { return std::generate_canonical<double, 53>(engine_); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal() { return normal_(engine_); }
    /// Uniform index in [0, n).
    std::size_t index(std::size_t n) {
        return static_cast<std::size_t>(std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_));
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_;
};

}  // namespace fpf
