#include "fpf/run_config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "fpf/benchmarks.hpp"
#include "fpf/errors.hpp"

namespace fpf {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& message) {
    throw ConfigError(fmt::format("{}: {}", path, message));
}

std::string join_path(const std::string& parent, const std::string& key) {
    return parent.empty() ? key : parent + "." + key;
}

// Object view that reports unknown keys and typed access by field path.
class Section {
public:
    Section(const json* node, std::string path) : node_(node), path_(std::move(path)) {
        if (node_ && !node_->is_object()) fail(path_.empty() ? "<root>" : path_, "expected an object");
    }

    const json* find(const std::string& key) {
        seen_.insert(key);
        if (!node_) return nullptr;
        const auto it = node_->find(key);
        if (it == node_->end() || it->is_null()) return nullptr;
        return &*it;
    }
    std::string path(const std::string& key) const { return join_path(path_, key); }

    Section child(const std::string& key) { return Section(find(key), path(key)); }

    void number(const std::string& key, double& out) {
        if (const json* v = find(key)) out = as_number(*v, path(key));
    }
    void count(const std::string& key, std::size_t& out) {
        if (const json* v = find(key)) out = as_count(*v, path(key));
    }
    void boolean(const std::string& key, bool& out) {
        if (const json* v = find(key)) {
            if (!v->is_boolean()) fail(path(key), "expected true or false");
            out = v->get<bool>();
        }
    }
    void text(const std::string& key, std::string& out) {
        if (const json* v = find(key)) {
            if (!v->is_string()) fail(path(key), "expected a string");
            out = v->get<std::string>();
        }
    }
    void numbers(const std::string& key, std::vector<double>& out) {
        if (const json* v = find(key)) {
            if (!v->is_array()) fail(path(key), "expected an array of numbers");
            out.clear();
            for (std::size_t i = 0; i < v->size(); ++i) out.push_back(as_number((*v)[i], fmt::format("{}[{}]", path(key), i)));
        }
    }

    void finish() const {
        if (!node_) return;
        for (const auto& [key, value] : node_->items()) {
            if (!seen_.count(key)) fail(path(key), "unknown field");
        }
    }

    static double as_number(const json& v, const std::string& path) {
        if (!v.is_number()) fail(path, "expected a number");
        return v.get<double>();
    }
    static std::size_t as_count(const json& v, const std::string& path) {
        if (!v.is_number_unsigned()) fail(path, "expected a non-negative integer");
        return v.get<std::size_t>();
    }

private:
    const json* node_;
    std::string path_;
    std::set<std::string> seen_;
};

void require(bool ok, const std::string& path, const std::string& message) {
    if (!ok) fail(path, message);
}

Tie parse_tie(const json& v, const std::string& path, bool is_sd) {
    if (v.is_number()) return Tie::constant(v.get<double>());
    if (!v.is_object()) fail(path, "expected a number or an object");
    Section s(&v, path);
    const json* idx = s.find("design");
    if (!idx) fail(s.path("design"), "missing design index");
    const std::size_t design = Section::as_count(*idx, s.path("design"));
    double coef = 1.0;
    s.number(is_sd ? "cov" : "coefficient", coef);
    s.finish();
    return Tie::design(design, coef);
}

json tie_json(const Tie& t, bool is_sd) {
    if (!t.design_index) return t.coefficient;
    return json{{"design", *t.design_index}, {is_sd ? "cov" : "coefficient", t.coefficient}};
}

std::vector<std::string> default_names(std::size_t n) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(fmt::format("phi_{}", i + 1));
    return out;
}

}  // namespace

RunConfig parse_config(const json& doc) {
    RunConfig c;
    Section root(&doc, "");

    {
        Section m = root.child("model");
        m.text("type", c.model.type);
        if (c.model.type == "beam") {
            m.number("length", c.model.length);
            require(c.model.length > 0.0, m.path("length"), "must be positive");
            std::vector<double> band = {c.model.band_lo, c.model.band_hi};
            m.numbers("band", band);
            require(band.size() == 2, m.path("band"), "expected [low, high]");
            require(band[0] > 0.0 && band[0] <= band[1], m.path("band"), "expected 0 < low <= high");
            c.model.band_lo = band[0];
            c.model.band_hi = band[1];
        } else if (c.model.type == "linear") {
            m.number("intercept", c.model.intercept);
            m.numbers("design_coefficients", c.model.design_coefficients);
            m.numbers("random_coefficients", c.model.random_coefficients);
        } else if (c.model.type != "toy") {
            fail(m.path("type"), fmt::format("unknown model '{}' (beam, toy or linear)", c.model.type));
        }
        m.finish();
    }

    std::unique_ptr<StochasticModel> builtin;
    if (c.model.type == "beam") builtin = std::make_unique<StochasticModel>(beam_stochastic_model());
    if (c.model.type == "toy") builtin = std::make_unique<StochasticModel>(toy_stochastic_model());

    {
        Section d = root.child("design_space");
        if (builtin) {
            c.lower = builtin->space().box().lo;
            c.upper = builtin->space().box().hi;
            c.names = builtin->space().names();
        }
        d.numbers("lower", c.lower);
        d.numbers("upper", c.upper);
        if (const json* names = d.find("names")) {
            if (!names->is_array()) fail(d.path("names"), "expected an array of strings");
            c.names.clear();
            for (std::size_t i = 0; i < names->size(); ++i) {
                if (!(*names)[i].is_string()) fail(fmt::format("{}[{}]", d.path("names"), i), "expected a string");
                c.names.push_back((*names)[i].get<std::string>());
            }
        }
        d.finish();
        require(!c.lower.empty(), d.path("lower"), "design space is required for this model");
        require(c.lower.size() == c.upper.size(), d.path("upper"), "must match the length of lower");
        for (std::size_t i = 0; i < c.lower.size(); ++i) {
            require(c.lower[i] < c.upper[i], fmt::format("{}[{}]", d.path("upper"), i), "must exceed the lower bound");
        }
        if (c.names.empty()) c.names = default_names(c.lower.size());
        require(c.names.size() == c.lower.size(), d.path("names"), "one name per design variable");
    }

    if (const json* rv = root.find("random_variables")) {
        if (!rv->is_array() || rv->empty()) fail("random_variables", "expected a non-empty array");
        for (std::size_t i = 0; i < rv->size(); ++i) {
            const std::string p = fmt::format("random_variables[{}]", i);
            Section s(&(*rv)[i], p);
            std::string name = fmt::format("theta_{}", i + 1);
            std::string family = "normal";
            s.text("name", name);
            s.text("distribution", family);
            require(family == "normal", s.path("distribution"), "only normal is supported");
            const json* mean = s.find("mean");
            const json* sd = s.find("sd");
            if (!mean) fail(s.path("mean"), "missing");
            if (!sd) fail(s.path("sd"), "missing");
            Tie m = parse_tie(*mean, s.path("mean"), false);
            Tie d = parse_tie(*sd, s.path("sd"), true);
            for (const auto& [t, key] : {std::pair{m, "mean"}, std::pair{d, "sd"}}) {
                if (t.design_index && *t.design_index >= c.lower.size()) {
                    fail(s.path(key) + ".design", "refers to a missing design variable");
                }
            }
            s.finish();
            c.random_variables.push_back(RandomVariableSpec::normal(name, m, d));
        }
    } else if (builtin) {
        c.random_variables = builtin->specs();
    } else {
        fail("random_variables", "required for this model");
    }
    try {
        StochasticModel(DesignSpace(c.lower, c.upper, c.names), c.random_variables);
    } catch (const std::exception& e) {
        fail("random_variables", e.what());
    }
    if (c.model.type == "linear") {
        require(c.model.design_coefficients.size() == c.lower.size(), "model.design_coefficients",
                "one coefficient per design variable");
        require(c.model.random_coefficients.size() == c.random_variables.size(), "model.random_coefficients",
                "one coefficient per random variable");
    }

    auto& po = c.pipeline;
    {
        Section s = root.child("pilot");
        std::string engine = "dmcs";
        s.text("engine", engine);
        if (engine == "dmcs") {
            po.pilot_engine = PilotEngine::dmcs;
        } else if (engine == "subset") {
            po.pilot_engine = PilotEngine::subset;
        } else {
            fail(s.path("engine"), "expected dmcs or subset");
        }
        s.count("samples", po.pilot_samples);
        require(po.pilot_samples > 0, s.path("samples"), "must be positive");
        Section ss = s.child("subset");
        ss.count("samples_per_level", po.subset.n_per_level);
        ss.number("p0", po.subset.p0);
        ss.count("max_levels", po.subset.max_levels);
        ss.finish();
        require(po.subset.n_per_level > 0, ss.path("samples_per_level"), "must be positive");
        require(po.subset.p0 > 0.0 && po.subset.p0 < 1.0, ss.path("p0"), "must lie in (0, 1)");
        require(po.subset.max_levels > 0, ss.path("max_levels"), "must be positive");
        s.finish();
    }
    {
        Section s = root.child("iteration");
        s.count("budget", po.iteration_budget);
        s.number("ratio", po.ratio);
        s.count("max_iterations", po.max_iterations);
        s.count("burn_in", po.burn_in);
        s.count("max_chains", po.max_chains);
        s.number("proposal_scale", po.proposal_scale);
        s.finish();
        require(po.iteration_budget > 0, s.path("budget"), "must be positive");
        require(po.ratio > 0.0 && po.ratio < 1.0, s.path("ratio"), "must lie in (0, 1)");
        require(po.max_chains > 0, s.path("max_chains"), "must be positive");
        require(po.proposal_scale > 0.0, s.path("proposal_scale"), "must be positive");
    }
    {
        Section s = root.child("bsp");
        auto& b = po.bsp;
        s.number("alpha", b.alpha);
        if (const json* beta = s.find("beta")) b.beta = Section::as_number(*beta, s.path("beta"));
        s.count("particles", b.particles);
        s.count("max_leaves", b.max_leaves);
        s.count("patience", b.patience);
        s.count("max_depth", b.max_depth);
        s.number("min_cell_samples", b.min_cell_samples);
        s.finish();
        require(b.alpha > 0.0, s.path("alpha"), "must be positive");
        require(!b.beta || *b.beta >= 0.0, s.path("beta"), "must be non-negative");
        require(b.particles > 0, s.path("particles"), "must be positive");
        require(b.max_leaves > 0, s.path("max_leaves"), "must be positive");
        require(b.patience > 0, s.path("patience"), "must be positive");
        require(b.max_depth > 0, s.path("max_depth"), "must be positive");
        require(b.min_cell_samples >= 0.0, s.path("min_cell_samples"), "must be non-negative");
    }
    root.number("stop_floor", po.stop_floor);
    require(po.stop_floor > 0.0 && po.stop_floor < 1.0, "stop_floor", "must lie in (0, 1)");
    {
        std::size_t threads = po.threads;
        root.count("threads", threads);
        require(threads > 0, "threads", "must be positive");
        po.threads = static_cast<unsigned>(threads);
    }

    {
        Section s = root.child("smoother");
        auto& o = c.smoother;
        s.number("noise_floor", o.noise_floor);
        s.numbers("candidate_noise", o.candidate_noise);
        s.boolean("select_noise", o.select_noise);
        s.numbers("length_scales", o.length_scales);
        s.numbers("candidate_scales", o.candidate_scales);
        s.count("sweeps", o.sweeps);
        if (const json* orders = s.find("trend_orders")) {
            if (!orders->is_array() || orders->empty()) fail(s.path("trend_orders"), "expected a non-empty array");
            o.trend_orders.clear();
            for (std::size_t i = 0; i < orders->size(); ++i) {
                const auto p = fmt::format("{}[{}]", s.path("trend_orders"), i);
                o.trend_orders.push_back(Section::as_count((*orders)[i], p));
                require(o.trend_orders.back() <= 2, p, "must be 0, 1 or 2");
            }
        }
        s.finish();
        require(o.noise_floor > 0.0, s.path("noise_floor"), "must be positive");
        for (double v : o.candidate_noise) require(v > 0.0, s.path("candidate_noise"), "entries must be positive");
        require(o.length_scales.empty() || o.length_scales.size() == c.lower.size(), s.path("length_scales"),
                "one length scale per design variable");
        for (double v : o.length_scales) require(v > 0.0, s.path("length_scales"), "entries must be positive");
        require(!o.candidate_scales.empty(), s.path("candidate_scales"), "must not be empty");
        for (double v : o.candidate_scales) require(v > 0.0, s.path("candidate_scales"), "entries must be positive");
    }

    {
        Section s = root.child("optimization");
        auto& o = c.optimization;
        s.numbers("allowable", o.allowable);
        s.text("objective", o.objective);
        s.number("mean_thickness", o.mean_thickness);
        s.numbers("coefficients", o.coefficients);
        s.count("grid_per_dim", o.solver.grid_per_dim);
        s.count("random_starts", o.solver.random_starts);
        s.count("max_evaluations", o.solver.max_evaluations);
        s.number("tolerance", o.solver.tolerance);
        s.number("penalty", o.solver.penalty);
        s.finish();
        require(!o.allowable.empty(), s.path("allowable"), "must not be empty");
        for (std::size_t i = 0; i < o.allowable.size(); ++i) {
            require(o.allowable[i] > 0.0 && o.allowable[i] < 1.0, fmt::format("{}[{}]", s.path("allowable"), i),
                    "must lie in (0, 1)");
        }
        if (o.objective == "mean_area") {
            require(c.lower.size() == 2, s.path("objective"), "mean_area needs two design variables (b, h)");
            require(o.mean_thickness > 0.0, s.path("mean_thickness"), "must be positive");
            require(o.coefficients.empty(), s.path("coefficients"), "only used by the linear objective");
        } else if (o.objective == "linear") {
            require(o.coefficients.size() == c.lower.size(), s.path("coefficients"), "one coefficient per design variable");
        } else {
            fail(s.path("objective"), "expected mean_area or linear");
        }
        require(o.solver.grid_per_dim > 0, s.path("grid_per_dim"), "must be positive");
        require(o.solver.max_evaluations > 0, s.path("max_evaluations"), "must be positive");
        require(o.solver.tolerance > 0.0, s.path("tolerance"), "must be positive");
        require(o.solver.penalty > 0.0, s.path("penalty"), "must be positive");
    }

    {
        Section s = root.child("output");
        std::string dir = c.output.directory.string();
        s.text("directory", dir);
        c.output.directory = dir;
        s.count("grid_resolution", c.output.grid_resolution);
        s.finish();
        require(!dir.empty(), s.path("directory"), "must not be empty");
        require(c.output.grid_resolution >= 2, s.path("grid_resolution"), "must be at least 2");
    }
    {
        Section s = root.child("compare");
        s.number("tolerance_log10", c.compare.tolerance_log10);
        s.number("min_probability", c.compare.min_probability);
        s.number("pass_fraction", c.compare.pass_fraction);
        s.finish();
        require(c.compare.tolerance_log10 > 0.0, s.path("tolerance_log10"), "must be positive");
        require(c.compare.min_probability > 0.0 && c.compare.min_probability < 1.0, s.path("min_probability"),
                "must lie in (0, 1)");
        require(c.compare.pass_fraction > 0.0 && c.compare.pass_fraction <= 1.0, s.path("pass_fraction"),
                "must lie in (0, 1]");
    }
    if (const json* seed = root.find("seed")) {
        if (!seed->is_number_unsigned()) fail("seed", "expected a non-negative integer");
        c.seed = seed->get<std::uint64_t>();
    }
    root.finish();
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(fmt::format("{}: cannot open configuration", path.string()));
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
    }
    return parse_config(doc);
}

json to_json(const RunConfig& c) {
    json model{{"type", c.model.type}};
    if (c.model.type == "beam") {
        model["length"] = c.model.length;
        model["band"] = {c.model.band_lo, c.model.band_hi};
    } else if (c.model.type == "linear") {
        model["intercept"] = c.model.intercept;
        model["design_coefficients"] = c.model.design_coefficients;
        model["random_coefficients"] = c.model.random_coefficients;
    }
    json rvs = json::array();
    for (const auto& s : c.random_variables) {
        rvs.push_back({{"name", s.name}, {"distribution", "normal"}, {"mean", tie_json(s.mean, false)},
                       {"sd", tie_json(s.sd, true)}});
    }
    const auto& po = c.pipeline;
    const auto& b = po.bsp;
    const auto& sm = c.smoother;
    const auto& op = c.optimization;
    json optimization{{"allowable", op.allowable},
                      {"objective", op.objective},
                      {"mean_thickness", op.mean_thickness},
                      {"grid_per_dim", op.solver.grid_per_dim},
                      {"random_starts", op.solver.random_starts},
                      {"max_evaluations", op.solver.max_evaluations},
                      {"tolerance", op.solver.tolerance},
                      {"penalty", op.solver.penalty}};
    if (op.objective == "linear") optimization["coefficients"] = op.coefficients;
    return json{
        {"model", model},
        {"design_space", {{"names", c.names}, {"lower", c.lower}, {"upper", c.upper}}},
        {"random_variables", rvs},
        {"pilot",
         {{"engine", po.pilot_engine == PilotEngine::dmcs ? "dmcs" : "subset"},
          {"samples", po.pilot_samples},
          {"subset",
           {{"samples_per_level", po.subset.n_per_level}, {"p0", po.subset.p0}, {"max_levels", po.subset.max_levels}}}}},
        {"iteration",
         {{"budget", po.iteration_budget},
          {"ratio", po.ratio},
          {"max_iterations", po.max_iterations},
          {"burn_in", po.burn_in},
          {"max_chains", po.max_chains},
          {"proposal_scale", po.proposal_scale}}},
        {"bsp",
         {{"alpha", b.alpha},
          {"beta", b.beta ? json(*b.beta) : json(nullptr)},
          {"particles", b.particles},
          {"max_leaves", b.max_leaves},
          {"patience", b.patience},
          {"max_depth", b.max_depth},
          {"min_cell_samples", b.min_cell_samples}}},
        {"stop_floor", po.stop_floor},
        {"smoother",
         {{"noise_floor", sm.noise_floor},
          {"candidate_noise", sm.candidate_noise},
          {"select_noise", sm.select_noise},
          {"length_scales", sm.length_scales.empty() ? json(nullptr) : json(sm.length_scales)},
          {"candidate_scales", sm.candidate_scales},
          {"sweeps", sm.sweeps},
          {"trend_orders", sm.trend_orders}}},
        {"optimization", optimization},
        {"output", {{"directory", c.output.directory.string()}, {"grid_resolution", c.output.grid_resolution}}},
        {"compare",
         {{"tolerance_log10", c.compare.tolerance_log10},
          {"min_probability", c.compare.min_probability},
          {"pass_fraction", c.compare.pass_fraction}}},
        {"seed", c.seed},
        {"threads", po.threads},
    };
}

StochasticModel build_stochastic_model(const RunConfig& c) {
    return StochasticModel(DesignSpace(c.lower, c.upper, c.names), c.random_variables);
}

std::unique_ptr<LimitStateModel> build_limit_state(const RunConfig& c) {
    if (c.model.type == "beam") return std::make_unique<BoxBeamModel>(c.model.length, c.model.band_lo, c.model.band_hi);
    if (c.model.type == "toy") return std::make_unique<ToyModel>();
    return std::make_unique<LinearModel>(c.model.intercept, c.model.design_coefficients, c.model.random_coefficients);
}

ScalarField build_objective(const RunConfig& c) {
    if (c.optimization.objective == "mean_area") {
        const double t = c.optimization.mean_thickness;
        return [t](std::span<const double> phi) { return objective_mean_area(phi, t); };
    }
    const auto coef = c.optimization.coefficients;
    return [coef](std::span<const double> phi) {
        double v = 0.0;
        for (std::size_t i = 0; i < coef.size(); ++i) v += coef[i] * phi[i];
        return v;
    };
}

}  // namespace fpf
