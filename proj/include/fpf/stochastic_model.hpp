#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fpf/geometry.hpp"
#include "fpf/random.hpp"

namespace fpf {

/// Design space: a box of closed per-dimension intervals, with names.
class DesignSpace {
public:
    DesignSpace(std::vector<double> lo, std::vector<double> hi, std::vector<std::string> names = {});

    std::size_t dimension() const noexcept { return box_.dimension(); }
    const Box& box() const noexcept { return box_; }
    double lo(std::size_t i) const { return box_.lo[i]; }
    double hi(std::size_t i) const { return box_.hi[i]; }
    const std::vector<std::string>& names() const noexcept { return names_; }
    double volume() const { return box_.volume(); }
    bool contains(std::span<const double> phi) const { return box_.contains(phi); }

private:
    Box box_;
    std::vector<std::string> names_;
};

/// Uniform design prior: 1/volume inside the closed box, 0 outside.
double design_prior_density(std::span<const double> phi, const DesignSpace& space);

enum class Distribution { normal };

/// A distribution parameter that is either a constant or coefficient x phi[index].
struct Tie {
    double coefficient = 0.0;
    std::optional<std::size_t> design_index;

    static Tie constant(double value) { return {value, std::nullopt}; }
    static Tie design(std::size_t index, double coefficient = 1.0) { return {coefficient, index}; }
    double resolve(std::span<const double> phi) const {
        return design_index ? coefficient * phi[*design_index] : coefficient;
    }
};

struct RandomVariableSpec {
    std::string name;
    Distribution family = Distribution::normal;
    Tie mean;
    Tie sd;

    static RandomVariableSpec normal(std::string name, Tie mean, Tie sd) {
        return {std::move(name), Distribution::normal, mean, sd};
    }
};

/// Augmented-space draw. `z` holds the standardized random coordinates; the
/// physical vector is theta = mean(phi) + sd(phi) * z.
struct AugmentedSample {
    std::vector<double> phi;
    std::vector<double> z;
    std::vector<double> theta;
    bool failed = false;
    double performance = 0.0;
    double margin = 0.0;  // <= 0 exactly when failed
};

/// Design space plus the random-variable specifications.
class StochasticModel {
public:
    /// Throws ConfigError if a spec references a missing design coordinate or
    /// its standard deviation is not strictly positive on the whole space.
    StochasticModel(DesignSpace space, std::vector<RandomVariableSpec> specs);

    const DesignSpace& space() const noexcept { return space_; }
    const std::vector<RandomVariableSpec>& specs() const noexcept { return specs_; }
    std::size_t design_dimension() const noexcept { return space_.dimension(); }
    std::size_t random_dimension() const noexcept { return specs_.size(); }

    double resolved_mean(std::size_t j, std::span<const double> phi) const { return specs_[j].mean.resolve(phi); }
    double resolved_sd(std::size_t j, std::span<const double> phi) const { return specs_[j].sd.resolve(phi); }
    std::vector<double> to_physical(std::span<const double> phi, std::span<const double> z) const;

private:
    DesignSpace space_;
    std::vector<RandomVariableSpec> specs_;
};

struct Evaluation {
    double performance = 0.0;
    double margin = 0.0;
    bool failed = false;
};

/// Limit-state contract: (phi, theta) -> performance and failure. Evaluations
/// are pure; the counter is incremented once per call to evaluate().
class LimitStateModel {
public:
    virtual ~LimitStateModel() = default;

    Evaluation evaluate(std::span<const double> phi, std::span<const double> theta) const {
        count_.fetch_add(1, std::memory_order_relaxed);
        return do_evaluate(phi, theta);
    }

    /// Whether theta is physically valid; inadmissible draws are resampled.
    virtual bool admissible(std::span<const double> /*phi*/, std::span<const double> /*theta*/) const { return true; }
    virtual std::string name() const = 0;

    std::uint64_t evaluations() const noexcept { return count_.load(std::memory_order_relaxed); }

protected:
    virtual Evaluation do_evaluate(std::span<const double> phi, std::span<const double> theta) const = 0;

private:
    mutable std::atomic<std::uint64_t> count_{0};
};

/// Fills theta and the evaluation fields of `s` from its phi and z.
void evaluate_sample(AugmentedSample& s, const StochasticModel& model, const LimitStateModel& lsm);

/// phi uniform on the design space, z standard normal (redrawn until the
/// physical vector is admissible), then one model evaluation.
AugmentedSample sample_augmented(const StochasticModel& model, const LimitStateModel& lsm, RandomStream& stream);

/// Same with phi held fixed.
AugmentedSample sample_at(std::span<const double> phi, const StochasticModel& model, const LimitStateModel& lsm,
                          RandomStream& stream);

}  // namespace fpf
