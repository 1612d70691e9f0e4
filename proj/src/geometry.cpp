#include "fpf/geometry.hpp"

#include "fpf/errors.hpp"

namespace fpf {

Box::Box(std::vector<double> lower, std::vector<double> upper) : lo(std::move(lower)), hi(std::move(upper)) {
    if (lo.size() != hi.size()) throw ArgumentError("box bounds differ in dimension");
}

double Box::volume() const {
    double v = 1.0;
    for (std::size_t i = 0; i < lo.size(); ++i) v *= hi[i] - lo[i];
    return v;
}

std::vector<double> Box::center() const {
    std::vector<double> c(lo.size());
    for (std::size_t i = 0; i < lo.size(); ++i) c[i] = 0.5 * (lo[i] + hi[i]);
    return c;
}

bool Box::contains(std::span<const double> x) const {
    if (x.size() != lo.size()) return false;
    for (std::size_t i = 0; i < lo.size(); ++i) {
        if (!(x[i] >= lo[i] && x[i] <= hi[i])) return false;
    }
    return true;
}

bool Box::contains_cell(std::span<const double> x, const Box& outer) const {
    if (x.size() != lo.size()) return false;
    for (std::size_t i = 0; i < lo.size(); ++i) {
        if (!(x[i] >= lo[i])) return false;
        if (x[i] < hi[i]) continue;
        if (!(hi[i] == outer.hi[i] && x[i] <= hi[i])) return false;
    }
    return true;
}

void PointSet::push_back(std::span<const double> x) {
    if (x.size() != dim_) throw ArgumentError("point dimension mismatch");
    data_.insert(data_.end(), x.begin(), x.end());
}

}  // namespace fpf
