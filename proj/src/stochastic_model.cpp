#include "fpf/stochastic_model.hpp"

#include <fmt/format.h>

#include "fpf/errors.hpp"

namespace fpf {

DesignSpace::DesignSpace(std::vector<double> lo, std::vector<double> hi, std::vector<std::string> names)
    : box_(std::move(lo), std::move(hi)), names_(std::move(names)) {
    if (box_.dimension() == 0) throw ConfigError("design space has no dimensions");
    for (std::size_t i = 0; i < box_.dimension(); ++i) {
        if (!(box_.lo[i] < box_.hi[i])) {
            throw ConfigError(fmt::format("design interval {} is empty: [{}, {}]", i, box_.lo[i], box_.hi[i]));
        }
    }
    if (names_.empty()) {
        for (std::size_t i = 0; i < box_.dimension(); ++i) names_.push_back(fmt::format("phi_{}", i + 1));
    }
    if (names_.size() != box_.dimension()) throw ConfigError("design names do not match dimension");
}

double design_prior_density(std::span<const double> phi, const DesignSpace& space) {
    return space.contains(phi) ? 1.0 / space.volume() : 0.0;
}

StochasticModel::StochasticModel(DesignSpace space, std::vector<RandomVariableSpec> specs)
    : space_(std::move(space)), specs_(std::move(specs)) {
    const auto& box = space_.box();
    for (const auto& s : specs_) {
        for (const Tie* t : {&s.mean, &s.sd}) {
            if (t->design_index && *t->design_index >= space_.dimension()) {
                throw ConfigError(fmt::format("random variable '{}' references design coordinate {} of {}", s.name,
                                              *t->design_index, space_.dimension()));
            }
        }
        // sd is affine in one design coordinate, so the interval ends bound it.
        const double lo_sd = s.sd.design_index ? s.sd.coefficient * box.lo[*s.sd.design_index] : s.sd.coefficient;
        const double hi_sd = s.sd.design_index ? s.sd.coefficient * box.hi[*s.sd.design_index] : s.sd.coefficient;
        if (!(lo_sd > 0.0 && hi_sd > 0.0)) {
            throw ConfigError(fmt::format("random variable '{}' has non-positive standard deviation", s.name));
        }
    }
}

std::vector<double> StochasticModel::to_physical(std::span<const double> phi, std::span<const double> z) const {
    std::vector<double> theta(specs_.size());
    for (std::size_t j = 0; j < specs_.size(); ++j) {
        theta[j] = resolved_mean(j, phi) + resolved_sd(j, phi) * z[j];
    }
    return theta;
}

void evaluate_sample(AugmentedSample& s, const StochasticModel& model, const LimitStateModel& lsm) {
    s.theta = model.to_physical(s.phi, s.z);
    const Evaluation e = lsm.evaluate(s.phi, s.theta);
    s.failed = e.failed;
    s.performance = e.performance;
    s.margin = e.margin;
}

namespace {

void draw_admissible_z(AugmentedSample& s, const StochasticModel& model, const LimitStateModel& lsm,
                       RandomStream& stream) {
    s.z.resize(model.random_dimension());
    for (;;) {
        for (auto& z : s.z) z = stream.normal();
        s.theta = model.to_physical(s.phi, s.z);
        if (lsm.admissible(s.phi, s.theta)) return;
    }
}

}  // namespace

AugmentedSample sample_augmented(const StochasticModel& model, const LimitStateModel& lsm, RandomStream& stream) {
    AugmentedSample s;
    const auto& box = model.space().box();
    s.phi.resize(box.dimension());
    for (std::size_t i = 0; i < s.phi.size(); ++i) s.phi[i] = stream.uniform(box.lo[i], box.hi[i]);
    draw_admissible_z(s, model, lsm, stream);
    evaluate_sample(s, model, lsm);
    return s;
}

AugmentedSample sample_at(std::span<const double> phi, const StochasticModel& model, const LimitStateModel& lsm,
                          RandomStream& stream) {
    AugmentedSample s;
    s.phi.assign(phi.begin(), phi.end());
    draw_admissible_z(s, model, lsm, stream);
    evaluate_sample(s, model, lsm);
    return s;
}

}  // namespace fpf
