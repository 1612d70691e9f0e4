#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "fpf/app.hpp"
#include "fpf/artifacts.hpp"
#include "fpf/errors.hpp"
#include "fpf/run_config.hpp"

using namespace fpf;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::current_path() / "cli_io_scratch" / name;
    fs::remove_all(p);
    fs::create_directories(p.parent_path());
    return p;
}

RunConfig small_toy(const fs::path& dir) {
    RunConfig c = load_config(fs::path(CONFIG_DIR) / "toy.json");
    c.output.directory = dir;
    c.output.grid_resolution = 9;
    return c;
}

// Shared toy run, computed once.
const RunResult& toy_run() {
    static const RunResult r = execute_run(small_toy(scratch("toy_a")));
    return r;
}

int run_exe(const std::string& args) {
    const std::string cmd = fmt::format("\"{}\" {} > /dev/null 2>&1", FPFOPT_EXE, args);
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string config_error(const json& doc) {
    try {
        parse_config(doc);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("double text round trip") {
    for (double x : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0, 1e-320}) {
        CHECK(parse_double(format_double(x)) == x);
    }
    CHECK(std::isinf(parse_double("inf")));
    CHECK(std::isnan(parse_double("nan")));
    CHECK_THROWS_AS(parse_double("1.5x"), ArgumentError);
    CHECK_THROWS_AS(parse_double(""), ArgumentError);
}

TEST_CASE("config defaults and idempotency") {
    const RunConfig beam = parse_config(json::object());
    CHECK(beam.model.type == "beam");
    CHECK(beam.lower == std::vector<double>{30.0, 30.0});
    CHECK(beam.upper == std::vector<double>{50.0, 50.0});
    CHECK(beam.optimization.allowable == std::vector<double>{1e-2, 1e-3, 1e-4});
    CHECK(beam.seed == 1);

    for (const char* name : {"toy.json", "beam.json"}) {
        const json first = to_json(load_config(fs::path(CONFIG_DIR) / name));
        const json second = to_json(parse_config(first));
        CHECK(first == second);
        CHECK(first.dump() == second.dump());
    }
}

TEST_CASE("config errors name the field") {
    CHECK(config_error({{"iteration", {{"ratio", 1.5}}}}).find("iteration.ratio") != std::string::npos);
    CHECK(config_error({{"bsp", {{"alpah", 0.5}}}}).find("bsp.alpah") != std::string::npos);
    CHECK(config_error({{"bsp", {{"alpah", 0.5}}}}).find("unknown field") != std::string::npos);
    CHECK(config_error({{"model", {{"type", "truss"}}}}).find("model.type") != std::string::npos);
    CHECK(config_error({{"seed", "one"}}).find("seed") != std::string::npos);
    CHECK(config_error({{"output", {{"grid_resolution", 1}}}}).find("output.grid_resolution") != std::string::npos);
    CHECK(config_error({{"design_space", {{"lower", {1.0}}, {"upper", {0.0}}}}}) != "");
    CHECK(config_error(json::object()) == "");
}

TEST_CASE("artifact round trips are byte-stable") {
    const RunResult& r = toy_run();
    const fs::path dir = r.directory;
    const fs::path out = scratch("rewrite");
    fs::create_directories(out);
    const auto& chain = *r.chain;

    SUBCASE("samples") {
        const auto s = read_samples(dir / "samples/level_1.csv");
        REQUIRE(s.size() == chain.levels[1].samples.size());
        for (std::size_t i = 0; i < s.size(); ++i) {
            CHECK(s[i].phi == chain.levels[1].samples[i].phi);
            CHECK(s[i].z == chain.levels[1].samples[i].z);
            CHECK(s[i].performance == chain.levels[1].samples[i].performance);
        }
        write_samples(out / "s.csv", s, 1, 1);
        CHECK(slurp(out / "s.csv") == slurp(dir / "samples/level_1.csv"));
    }
    SUBCASE("partitions") {
        for (std::size_t k = 0; k < chain.levels.size(); ++k) {
            const fs::path src = dir / fmt::format("partitions/level_{}.json", k);
            const auto d = partition_from_json(read_json(src));
            const auto& orig = chain.levels[k].density;
            CHECK(d.masses() == orig.masses());
            CHECK(d.partition().nodes().size() == orig.partition().nodes().size());
            for (double x = 0.0; x <= 4.0; x += 0.01) {
                CHECK(d(std::vector<double>{x}) == orig(std::vector<double>{x}));
            }
            write_json(out / "p.json", partition_to_json(d));
            CHECK(slurp(out / "p.json") == slurp(src));
        }
    }
    SUBCASE("regions") {
        for (const auto& e : fs::directory_iterator(dir / "regions")) {
            const json doc = read_json(e.path());
            const RegionIndicator reg = region_from_json(doc);
            json again = region_to_json(reg);
            for (const auto& [k, v] : doc.items()) {
                if (!again.contains(k)) again[k] = v;
            }
            CHECK(again == doc);
        }
    }
    SUBCASE("support points and surface") {
        const auto sp = read_support_points(dir / "support_points.csv");
        write_support_points(out / "sp.csv", sp);
        CHECK(slurp(out / "sp.csv") == slurp(dir / "support_points.csv"));

        const RegressionSurface s = surface_from_json(read_json(dir / "surface.json"));
        for (double x = 0.0; x <= 4.0; x += 0.1) {
            CHECK(s.log_density(std::vector<double>{x}) == r.surface->log_density(std::vector<double>{x}));
        }
        write_json(out / "surface.json", surface_to_json(s));
        CHECK(slurp(out / "surface.json") == slurp(dir / "surface.json"));
    }
    SUBCASE("optima") {
        const auto rows = read_optima(dir / "optima.csv");
        REQUIRE(rows.size() == 3);
        CHECK(rows[0].allowable == 1e-2);
        CHECK(rows[0].phi == r.optima[0].phi);
        write_optima(out / "optima.csv", rows);
        CHECK(slurp(out / "optima.csv") == slurp(dir / "optima.csv"));
    }
}

TEST_CASE("oracle table format") {
    FpfGridOracle o;
    o.resolution = 3;
    for (double a : {30.0, 40.0, 50.0}) {
        for (double b : {30.0, 40.0, 50.0}) o.points.push_back({{a, b}, a * b * 1e-5, 1000, 0.25});
    }
    const fs::path p = scratch("oracle.csv");
    write_oracle(p, o);
    const CsvTable t = read_csv(p);
    CHECK(t.header == std::vector<std::string>{"phi_1", "phi_2", "pf_hat", "n", "cov"});
    CHECK(t.rows.size() == 9);
    const FpfGridOracle back = read_oracle(p);
    CHECK(back.resolution == 3);
    for (std::size_t i = 0; i < 9; ++i) {
        CHECK(back.points[i].phi == o.points[i].phi);
        CHECK(back.points[i].pf_hat == o.points[i].pf_hat);
        CHECK(back.points[i].n == 1000);
    }
}

TEST_CASE("comparing a run with its own surface") {
    const RunResult& r = toy_run();
    const json manifest = read_json(r.directory / "manifest.json");
    FpfGridOracle o;
    o.resolution = 9;
    const StochasticModel m = toy_stochastic_model();
    for (auto& phi : design_grid(m.space(), 9)) {
        GridPoint g;
        g.pf_hat = smoothed_fpf(*r.surface, manifest.at("p_failure").get<double>(),
                                manifest.at("prior_density").get<double>(), phi);
        g.phi = std::move(phi);
        o.points.push_back(std::move(g));
    }
    const ComparisonReport rep = compare_run(r.directory, o);
    for (const auto& p : rep.points) CHECK(p.log10_ratio == 0.0);
    CHECK(rep.fraction == 1.0);
    CHECK(rep.passed);

    FpfGridOracle shifted = o;
    for (auto& g : shifted.points) g.phi[0] = 0.5 * g.phi[0];
    try {
        compare_run(r.directory, shifted);
        FAIL("expected GridMismatch");
    } catch (const GridMismatch& e) {
        CHECK(std::string(e.what()).find("phi_1") != std::string::npos);
    }
}

TEST_CASE("manifest accounting and repeatability") {
    const RunResult& a = toy_run();
    const json m = read_json(a.directory / "manifest.json");
    CHECK(m.at("status") == "complete");
    CHECK(m.at("version") == kVersion);
    std::uint64_t staged = 0;
    for (const auto& s : m.at("stages")) staged += s.at("evaluations").get<std::uint64_t>();
    CHECK(staged == m.at("model_evaluations").get<std::uint64_t>());
    CHECK(m.at("model_evaluations").get<std::uint64_t>() == a.model_evaluations);
    CHECK(m.at("normalization").at("composite").get<double>() < 1e-10);
    for (const auto& e : m.at("normalization").at("levels")) CHECK(e.get<double>() < 1e-12);
    for (const auto& [rel, sum] : m.at("checksums").items()) CHECK(file_checksum(a.directory / rel) == sum);

    RunConfig c = small_toy(scratch("toy_b"));
    c.pipeline.threads = 3;
    const RunResult b = execute_run(c);
    for (const auto& [rel, sum] : m.at("checksums").items()) {
        CHECK_MESSAGE(slurp(a.directory / rel) == slurp(b.directory / rel), rel);
    }
}

TEST_CASE("command-line exit codes") {
    const fs::path base = scratch("cli");
    fs::create_directories(base);
    const fs::path cfg = fs::path(CONFIG_DIR) / "toy.json";

    CHECK(run_exe("--version") == 0);
    CHECK(run_exe(fmt::format("run -c \"{}\" -o \"{}\"", cfg.string(), (base / "run").string())) == 0);
    CHECK(fs::exists(base / "run/manifest.json"));
    CHECK(run_exe(fmt::format("grid -c \"{}\" -o \"{}\" -r 21 --analytic", cfg.string(),
                              (base / "exact.csv").string())) == 0);
    CHECK(run_exe(fmt::format("compare -r \"{}\" -g \"{}\" -o \"{}\"", (base / "run").string(),
                              (base / "exact.csv").string(), (base / "cmp").string())) == 0);
    CHECK(fs::exists(base / "cmp/compare.csv"));
    CHECK(fs::exists(base / "cmp/compare_summary.txt"));

    // Oracle that disagrees everywhere.
    FpfGridOracle wrong;
    wrong.resolution = 5;
    for (auto& phi : design_grid(toy_stochastic_model().space(), 5)) wrong.points.push_back({phi, 0.9, 10, 0.0});
    write_oracle(base / "wrong.csv", wrong);
    CHECK(run_exe(fmt::format("compare -r \"{}\" -g \"{}\" -o \"{}\"", (base / "run").string(),
                              (base / "wrong.csv").string(), (base / "cmp2").string())) == 4);

    FpfGridOracle off = wrong;
    for (auto& g : off.points) g.phi[0] += 1.0;
    write_oracle(base / "off.csv", off);
    CHECK(run_exe(fmt::format("compare -r \"{}\" -g \"{}\"", (base / "run").string(), (base / "off.csv").string())) ==
          2);

    std::ofstream(base / "bad.json") << R"({"model":{"type":"toy"},"iteration":{"ratio":1.5}})";
    CHECK(run_exe(fmt::format("run -c \"{}\" -o \"{}\"", (base / "bad.json").string(), (base / "bad").string())) ==
          2);
    CHECK(run_exe("run --no-such-flag") == 2);
    CHECK(run_exe(fmt::format("run -c \"{}\"", (base / "missing.json").string())) == 2);

    // Too few pilot samples to see any failure of the beam.
    std::ofstream(base / "abort.json") << R"({"model":{"type":"beam"},"pilot":{"samples":20}})";
    CHECK(run_exe(fmt::format("run -c \"{}\" -o \"{}\"", (base / "abort.json").string(),
                              (base / "abort").string())) == 3);
    REQUIRE(fs::exists(base / "abort/manifest.json"));
    CHECK(read_json(base / "abort/manifest.json").at("status") == "aborted");
}
