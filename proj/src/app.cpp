#include "fpf/app.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "fpf/benchmarks.hpp"
#include "fpf/errors.hpp"
#include "fpf/random.hpp"

namespace fpf {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::vector<std::string> phi_header(std::size_t n) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(fmt::format("phi_{}", i + 1));
    return out;
}

void append(std::vector<std::string>& row, std::span<const double> values) {
    for (double v : values) row.push_back(format_double(v));
}

const char* stop_name(StopReason r) { return r == StopReason::floor_reached ? "floor_reached" : "iteration_cap"; }

// Bookkeeping for the manifest: every file written, in write order.
class ArtifactLog {
public:
    explicit ArtifactLog(fs::path root) : root_(std::move(root)) {}
    fs::path path(const std::string& rel) const { return root_ / rel; }
    void add(const std::string& rel) { files_.push_back(rel); }
    json checksums() const {
        json out = json::object();
        for (const auto& f : files_) out[f] = file_checksum(root_ / f);
        return out;
    }

private:
    fs::path root_;
    std::vector<std::string> files_;
};

double cell_mass(const PartitionLevel& level, const std::vector<int>& leaves) {
    double m = 0.0;
    for (int i : leaves) m += level.density.mass(i);
    return level.weight * m;
}

void write_chain(const RegionChainResult& chain, const StochasticModel& model, ArtifactLog& log) {
    CsvTable levels;
    levels.header = {"level",     "region_volume",  "weight",        "samples",      "evaluations",
                     "seeds",     "acceptance_rate", "active_leaves", "threshold_density", "realized_ratio",
                     "threshold_fpf", "high_leaves", "low_leaves",    "log_score"};
    for (const auto& l : chain.levels) {
        const std::string k = fmt::format("{}", l.k);
        write_samples(log.path(fmt::format("samples/level_{}.csv", k)), l.samples, model.design_dimension(),
                      model.random_dimension());
        log.add(fmt::format("samples/level_{}.csv", k));
        write_json(log.path(fmt::format("partitions/level_{}.json", k)), partition_to_json(l.density));
        log.add(fmt::format("partitions/level_{}.json", k));

        const bool has_split = !l.split.high_leaves.empty();
        const double fpf_level =
            has_split ? threshold_fpf_level(l, chain.p_failure, chain.prior_density) : std::nan("");
        levels.rows.push_back({k, format_double(l.region.volume()), format_double(l.weight),
                               fmt::format("{}", l.samples.size()), fmt::format("{}", l.evaluations),
                               fmt::format("{}", l.seeds), format_double(l.acceptance_rate),
                               fmt::format("{}", l.density.partition().active_leaves().size()),
                               format_double(l.threshold.density), format_double(l.threshold.realized_ratio),
                               format_double(fpf_level), fmt::format("{}", l.split.high_leaves.size()),
                               fmt::format("{}", l.split.low_leaves.size()), format_double(l.density.log_score)});
        if (has_split) {
            json s = region_to_json(l.split.high);
            s["name"] = fmt::format("S{}", l.k + 1);
            s["probability"] = cell_mass(l, l.split.high_leaves);
            const std::string rel = fmt::format("regions/S{}.json", l.k + 1);
            write_json(log.path(rel), s);
            log.add(rel);
        }
    }
    const auto& last = chain.levels.back();
    if (!last.split.low_leaves.empty()) {
        json d = region_to_json(last.split.low);
        d["name"] = fmt::format("D{}", last.k + 1);
        d["probability"] = cell_mass(last, last.split.low_leaves);
        const std::string rel = fmt::format("regions/D{}.json", last.k + 1);
        write_json(log.path(rel), d);
        log.add(rel);
    }
    write_csv(log.path("levels.csv"), levels);
    log.add("levels.csv");
}

json stage_counts(const RegionChainResult& chain) {
    json stages = json::array();
    for (const auto& l : chain.levels) {
        stages.push_back({{"stage", l.k == 0 ? std::string("pilot") : fmt::format("iteration_{}", l.k)},
                          {"evaluations", l.evaluations}});
    }
    return stages;
}

json base_manifest(const RunConfig& config, const LimitStateModel& lsm) {
    return json{{"version", kVersion}, {"seed", config.seed}, {"model", lsm.name()}, {"config", to_json(config)}};
}

void finish_manifest(json& manifest, const RegionChainResult& chain, const LimitStateModel& lsm, ArtifactLog& log) {
    std::uint64_t total = 0;
    for (const auto& l : chain.levels) total += l.evaluations;
    json level_errors = json::array();
    for (const auto& l : chain.levels) level_errors.push_back(std::abs(l.density.integral() - 1.0));
    manifest["stages"] = stage_counts(chain);
    manifest["stage_evaluations"] = total;
    manifest["model_evaluations"] = lsm.evaluations();
    manifest["iterations"] = chain.iterations();
    manifest["p_failure"] = chain.p_failure;
    manifest["prior_density"] = chain.prior_density;
    manifest["normalization"] = {{"levels", level_errors}};
    manifest["checksums"] = log.checksums();
}

json fpf_grid_table(const RunConfig& config, const StochasticModel& model, const RegionChainResult& chain,
                    const std::shared_ptr<const RegionChainResult>& shared, const RegressionSurface& surface,
                    ArtifactLog& log) {
    const std::size_t n = model.design_dimension();
    const bool toy = config.model.type == "toy";
    const FpfApproximation piecewise(shared);
    CsvTable fpf, grad;
    fpf.header = phi_header(n);
    fpf.header.emplace_back("fpf_smoothed");
    fpf.header.emplace_back("fpf_piecewise");
    if (toy) fpf.header.emplace_back("fpf_analytic");
    grad.header = phi_header(n);
    for (std::size_t i = 0; i < n; ++i) grad.header.push_back(fmt::format("dfpf_{}", i + 1));
    grad.header.emplace_back("on_boundary");
    for (const auto& phi : design_grid(model.space(), config.output.grid_resolution)) {
        std::vector<std::string> row;
        append(row, phi);
        row.push_back(format_double(smoothed_fpf(surface, chain.p_failure, chain.prior_density, phi)));
        row.push_back(format_double(piecewise(phi)));
        if (toy) row.push_back(format_double(toy_analytic_fpf(phi[0])));
        fpf.rows.push_back(std::move(row));

        const FpfGradient g = fpf_gradient(surface, chain.p_failure, chain.prior_density, phi);
        std::vector<std::string> grow;
        append(grow, phi);
        append(grow, g.value);
        grow.push_back(g.on_boundary ? "1" : "0");
        grad.rows.push_back(std::move(grow));
    }
    write_csv(log.path("fpf_grid.csv"), fpf);
    log.add("fpf_grid.csv");
    write_csv(log.path("gradient_grid.csv"), grad);
    log.add("gradient_grid.csv");
    return json{{"resolution", config.output.grid_resolution}, {"points", fpf.rows.size()}};
}

std::vector<OptimumRow> optimize_all(const RunConfig& config, const StochasticModel& model,
                                     const RegionChainResult& chain, const RegressionSurface& surface) {
    const ScalarField objective = build_objective(config);
    const ScalarField pf = [&](std::span<const double> phi) {
        return smoothed_fpf(surface, chain.p_failure, chain.prior_density, phi);
    };
    const RandomStream base = RandomStream::for_stage(config.seed, Stage::optimize);
    std::vector<OptimumRow> rows;
    for (std::size_t i = 0; i < config.optimization.allowable.size(); ++i) {
        const double allowable = config.optimization.allowable[i];
        DesignProblem problem{objective, pf, allowable, model.space().box()};
        RandomStream stream = base.child(i);
        OptimumRow row;
        row.allowable = allowable;
        try {
            const OptimalDesign d = optimize(problem, config.optimization.solver, stream);
            row.phi = d.phi;
            row.objective = d.objective;
            row.fpf = d.constraint;
            row.active = d.active;
        } catch (const Infeasible& e) {
            row.phi = e.least_violating();
            row.objective = objective(row.phi);
            row.fpf = pf(row.phi);
            row.feasible = false;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

double quantile(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) return 0.0;
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double t = pos - static_cast<double>(lo);
    if (t == 0.0) return sorted[lo];
    return sorted[lo] + t * (sorted[hi] - sorted[lo]);
}

}  // namespace

RunResult execute_run(const RunConfig& config) {
    const StochasticModel model = build_stochastic_model(config);
    const auto lsm = build_limit_state(config);
    RunResult result;
    result.directory = config.output.directory;
    fs::create_directories(result.directory);
    ArtifactLog log(result.directory);
    json manifest = base_manifest(config, *lsm);

    auto abort_with = [&](const RegionChainResult& partial, const std::string& what) {
        if (!partial.levels.empty()) write_chain(partial, model, log);
        manifest["status"] = "aborted";
        manifest["error"] = what;
        finish_manifest(manifest, partial, *lsm, log);
        write_json(log.path("manifest.json"), manifest);
    };

    std::shared_ptr<RegionChainResult> chain;
    try {
        chain = run_pipeline(config.pipeline, model, *lsm, config.seed);
    } catch (const PipelineError& e) {
        abort_with(e.partial(), e.what());
        throw;
    }
    result.chain = chain;
    write_chain(*chain, model, log);

    const auto support = extract_support_points(*chain);
    write_support_points(log.path("support_points.csv"), support);
    log.add("support_points.csv");
    try {
        result.surface = RegressionSurface::fit(support, chain->domain, config.smoother);
    } catch (const FitError& e) {
        abort_with(*chain, e.what());
        throw;
    }
    const RegressionSurface& surface = *result.surface;
    write_json(log.path("surface.json"), surface_to_json(surface));
    log.add("surface.json");

    const json grid = fpf_grid_table(config, model, *chain, chain, surface, log);
    result.optima = optimize_all(config, model, *chain, surface);
    write_optima(log.path("optima.csv"), result.optima);
    log.add("optima.csv");

    manifest["status"] = "complete";
    manifest["stop_reason"] = stop_name(chain->stop);
    manifest["regions"] = chain->levels.size() + 1;
    manifest["support_points"] = support.size();
    manifest["grid"] = grid;
    finish_manifest(manifest, *chain, *lsm, log);
    manifest["normalization"]["composite"] = std::abs(composite_integral(*chain) - 1.0);
    write_json(log.path("manifest.json"), manifest);
    result.model_evaluations = lsm->evaluations();
    return result;
}

FpfGridOracle build_oracle(const RunConfig& config, std::size_t resolution, std::size_t per_point, bool analytic) {
    const StochasticModel model = build_stochastic_model(config);
    if (!analytic) {
        const auto lsm = build_limit_state(config);
        return grid_dmcs_oracle(model, *lsm, resolution, per_point, config.seed, config.pipeline.threads);
    }
    if (config.model.type != "toy") throw ConfigError("model.type: an analytic grid exists only for the toy model");
    FpfGridOracle o;
    o.resolution = resolution;
    for (auto& phi : design_grid(model.space(), resolution)) {
        GridPoint g;
        g.pf_hat = toy_analytic_fpf(phi[0]);
        g.phi = std::move(phi);
        o.points.push_back(std::move(g));
    }
    return o;
}

ComparisonReport compare_run(const fs::path& run_directory, const FpfGridOracle& oracle) {
    const json manifest = read_json(run_directory / "manifest.json");
    if (manifest.value("status", "") != "complete") {
        throw ArgumentError(fmt::format("{}: run did not complete", run_directory.string()));
    }
    const RunConfig config = parse_config(manifest.at("config"));
    const RegressionSurface surface = surface_from_json(read_json(run_directory / "surface.json"));
    const double p_failure = manifest.at("p_failure").get<double>();
    const double prior = manifest.at("prior_density").get<double>();

    const std::size_t n = config.lower.size();
    if (oracle.points.empty()) throw GridMismatch("oracle grid is empty");
    if (oracle.points.front().phi.size() != n) {
        throw GridMismatch(fmt::format("oracle has {} design coordinates, run has {}",
                                       oracle.points.front().phi.size(), n));
    }
    std::vector<std::string> mismatches;
    for (std::size_t a = 0; a < n; ++a) {
        double lo = oracle.points.front().phi[a], hi = lo;
        for (const auto& g : oracle.points) {
            lo = std::min(lo, g.phi[a]);
            hi = std::max(hi, g.phi[a]);
        }
        const double tol = 1e-9 * (config.upper[a] - config.lower[a]);
        if (std::abs(lo - config.lower[a]) > tol || std::abs(hi - config.upper[a]) > tol) {
            mismatches.push_back(fmt::format("phi_{}: run [{}, {}], oracle [{}, {}]", a + 1, config.lower[a],
                                             config.upper[a], lo, hi));
        }
    }
    if (!mismatches.empty()) throw GridMismatch(fmt::format("design space differs: {}", fmt::join(mismatches, "; ")));

    ComparisonReport r;
    r.tolerance_log10 = config.compare.tolerance_log10;
    r.min_probability = config.compare.min_probability;
    r.pass_fraction = config.compare.pass_fraction;
    std::vector<double> abs_ratios;
    for (const auto& g : oracle.points) {
        ComparisonPoint p;
        p.phi = g.phi;
        p.oracle = g.pf_hat;
        p.estimate = smoothed_fpf(surface, p_failure, prior, g.phi);
        p.log10_ratio = (p.estimate == p.oracle) ? 0.0 : std::log10(p.estimate / p.oracle);
        p.scored = g.pf_hat >= r.min_probability;
        p.within = std::abs(p.log10_ratio) <= r.tolerance_log10;
        if (p.scored) {
            ++r.scored;
            if (p.within) ++r.within;
            abs_ratios.push_back(std::isnan(p.log10_ratio) ? std::numeric_limits<double>::infinity()
                                                           : std::abs(p.log10_ratio));
        }
        r.points.push_back(std::move(p));
    }
    std::sort(abs_ratios.begin(), abs_ratios.end());
    r.fraction = r.scored ? static_cast<double>(r.within) / static_cast<double>(r.scored) : 0.0;
    r.median_abs = quantile(abs_ratios, 0.5);
    r.q90_abs = quantile(abs_ratios, 0.9);
    r.max_abs = abs_ratios.empty() ? 0.0 : abs_ratios.back();
    r.passed = r.scored > 0 && r.fraction >= r.pass_fraction;
    return r;
}

std::string ComparisonReport::summary() const {
    return fmt::format(
        "points {}\nscored (oracle >= {}) {}\nwithin {} log10 {}\nfraction {:.4f} (required {})\n"
        "|log10 ratio| median {:.4f} q90 {:.4f} max {:.4f}\nresult {}\n",
        points.size(), min_probability, scored, tolerance_log10, within, fraction, pass_fraction, median_abs, q90_abs,
        max_abs, passed ? "PASS" : "FAIL");
}

void write_comparison(const fs::path& directory, const ComparisonReport& report) {
    CsvTable t;
    const std::size_t n = report.points.empty() ? 0 : report.points.front().phi.size();
    t.header = phi_header(n);
    for (const char* h : {"oracle", "estimate", "log10_ratio", "scored", "within"}) t.header.emplace_back(h);
    for (const auto& p : report.points) {
        std::vector<std::string> row;
        append(row, p.phi);
        row.push_back(format_double(p.oracle));
        row.push_back(format_double(p.estimate));
        row.push_back(format_double(p.log10_ratio));
        row.push_back(p.scored ? "1" : "0");
        row.push_back(p.within ? "1" : "0");
        t.rows.push_back(std::move(row));
    }
    write_csv(directory / "compare.csv", t);
    std::ofstream(directory / "compare_summary.txt", std::ios::binary) << report.summary();
}

int run_cli(int argc, char** argv) {
    CLI::App app{"Failure probability function approximation for reliability-based design"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    std::string config_path, out;
    std::uint64_t seed = 0;
    unsigned threads = 0;
    std::size_t resolution = 0, per_point = 100000;
    bool analytic = false;
    std::string run_dir, oracle_path;

    auto* run = app.add_subcommand("run", "pipeline, smoothing and optimization; writes all artifacts");
    run->add_option("-c,--config", config_path, "run configuration (JSON)")->required()->check(CLI::ExistingFile);
    run->add_option("-o,--out", out, "output directory (overrides output.directory)");
    run->add_option("-s,--seed", seed, "master seed override");
    run->add_option("-t,--threads", threads, "worker threads")->check(CLI::PositiveNumber);

    auto* grid = app.add_subcommand("grid", "direct Monte Carlo FPF oracle on a regular grid");
    grid->add_option("-c,--config", config_path, "run configuration (JSON)")->required()->check(CLI::ExistingFile);
    grid->add_option("-o,--out", out, "oracle CSV path (default <output.directory>/oracle.csv)");
    grid->add_option("-s,--seed", seed, "master seed override");
    grid->add_option("-t,--threads", threads, "worker threads")->check(CLI::PositiveNumber);
    grid->add_option("-r,--resolution", resolution, "points per axis (default output.grid_resolution)")
        ->check(CLI::Range(std::size_t{2}, std::size_t{1000}));
    grid->add_option("-n,--per-point", per_point, "draws per grid point")->check(CLI::PositiveNumber);
    grid->add_flag("--analytic", analytic, "exact FPF instead of sampling (toy model only)");

    auto* cmp = app.add_subcommand("compare", "score a run's smoothed FPF against an oracle grid");
    cmp->add_option("-r,--run", run_dir, "run directory")->required()->check(CLI::ExistingDirectory);
    cmp->add_option("-g,--oracle", oracle_path, "oracle CSV")->required()->check(CLI::ExistingFile);
    cmp->add_option("-o,--out", out, "report directory (default: the run directory)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_validation;
    }

    try {
        if (*cmp) {
            const ComparisonReport report = compare_run(run_dir, read_oracle(oracle_path));
            const fs::path dest = out.empty() ? fs::path(run_dir) : fs::path(out);
            fs::create_directories(dest);
            write_comparison(dest, report);
            std::cout << report.summary();
            return report.passed ? exit_ok : exit_comparison;
        }

        RunConfig config = load_config(config_path);
        if (run->count("--seed") || grid->count("--seed")) config.seed = seed;
        if (threads > 0) config.pipeline.threads = threads;
        if (*run && !out.empty()) config.output.directory = out;

        if (*grid) {
            const std::size_t res = resolution ? resolution : config.output.grid_resolution;
            const FpfGridOracle oracle = build_oracle(config, res, per_point, analytic);
            const fs::path dest = out.empty() ? config.output.directory / "oracle.csv" : fs::path(out);
            write_oracle(dest, oracle);
            fmt::print("{} grid points, {} model evaluations -> {}\n", oracle.points.size(), oracle.total_evaluations,
                       dest.string());
            return exit_ok;
        }

        const RunResult r = execute_run(config);
        fmt::print("{} iterations ({}), P(F) = {:.4g}, {} model evaluations\n", r.chain->iterations(),
                   stop_name(r.chain->stop), r.chain->p_failure, r.model_evaluations);
        for (const auto& o : r.optima) {
            fmt::print("[P_F] = {:g}: phi = ({:.4f}), objective {:.4f}, fpf {:.3e}{}\n", o.allowable,
                       fmt::join(o.phi, ", "), o.objective, o.fpf, o.feasible ? "" : " (infeasible)");
        }
        fmt::print("artifacts in {}\n", r.directory.string());
        return exit_ok;
    } catch (const ConfigError& e) {
        fmt::print(stderr, "configuration error: {}\n", e.what());
        return exit_validation;
    } catch (const GridMismatch& e) {
        fmt::print(stderr, "grid mismatch: {}\n", e.what());
        return exit_validation;
    } catch (const ArgumentError& e) {
        fmt::print(stderr, "invalid input: {}\n", e.what());
        return exit_validation;
    } catch (const PipelineError& e) {
        fmt::print(stderr, "pipeline aborted: {} (partial artifacts written)\n", e.what());
        return exit_pipeline;
    } catch (const FitError& e) {
        fmt::print(stderr, "smoothing failed: {} (partial artifacts written)\n", e.what());
        return exit_pipeline;
    }
}

}  // namespace fpf
