#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace fpf {

/// Axis-aligned box [lo, hi] in n dimensions.
struct Box {
    std::vector<double> lo;
    std::vector<double> hi;

    Box() = default;
    Box(std::vector<double> lower, std::vector<double> upper);

    std::size_t dimension() const noexcept { return lo.size(); }
    double width(std::size_t axis) const { return hi[axis] - lo[axis]; }
    double volume() const;
    std::vector<double> center() const;
    /// Closed-box membership.
    bool contains(std::span<const double> x) const;
    /// Membership under the partition convention: lo <= x < hi, except that an
    /// upper edge lying on `outer`'s upper edge is closed.
    bool contains_cell(std::span<const double> x, const Box& outer) const;
    bool operator==(const Box&) const = default;
};

/// Flat row-major set of points of fixed dimension.
class PointSet {
public:
    PointSet() = default;
    explicit PointSet(std::size_t dim) : dim_(dim) {}

    std::size_t dimension() const noexcept { return dim_; }
    std::size_t size() const noexcept { return dim_ == 0 ? 0 : data_.size() / dim_; }
    bool empty() const noexcept { return data_.empty(); }
    void push_back(std::span<const double> x);
    void reserve(std::size_t n) { data_.reserve(n * dim_); }
    std::span<const double> operator[](std::size_t i) const { return {data_.data() + i * dim_, dim_}; }

private:
    std::size_t dim_ = 0;
    std::vector<double> data_;
};

}  // namespace fpf
