#include "fpf/artifacts.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <fstream>
#include <iterator>
#include <sstream>

#include <fmt/format.h>

#include "fpf/errors.hpp"

namespace fpf {

using nlohmann::json;

std::string format_double(double x) { return fmt::format("{}", x); }

double parse_double(const std::string& text) {
    if (text == "inf") return std::numeric_limits<double>::infinity();
    if (text == "-inf") return -std::numeric_limits<double>::infinity();
    if (text == "nan") return std::numeric_limits<double>::quiet_NaN();
    const char* begin = text.c_str();
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(begin, &end);
    if (text.empty() || end != begin + text.size()) throw ArgumentError(fmt::format("'{}' is not a number", text));
    return v;
}

namespace {

std::size_t parse_size(const std::string& text) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(text, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (text.empty() || pos != text.size() || text.front() == '-') {
        throw ArgumentError(fmt::format("'{}' is not a non-negative integer", text));
    }
    return static_cast<std::size_t>(v);
}

bool parse_flag(const std::string& text) {
    if (text == "1") return true;
    if (text == "0") return false;
    throw ArgumentError(fmt::format("'{}' is not 0 or 1", text));
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::vector<std::string> numbered(const std::string& prefix, std::size_t n) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(fmt::format("{}{}", prefix, i + 1));
    return out;
}

std::size_t count_prefixed(const CsvTable& t, const std::string& prefix) {
    std::size_t n = 0;
    while (std::find(t.header.begin(), t.header.end(), fmt::format("{}{}", prefix, n + 1)) != t.header.end()) ++n;
    return n;
}

std::vector<double> read_prefixed(const CsvTable& t, const std::vector<std::string>& row, const std::string& prefix,
                                  std::size_t n) {
    std::vector<double> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(parse_double(row[t.column(fmt::format("{}{}", prefix, i + 1))]));
    return out;
}

void append(std::vector<std::string>& row, std::span<const double> values) {
    for (double v : values) row.push_back(format_double(v));
}

json box_json(const Box& b) { return json{{"lo", b.lo}, {"hi", b.hi}}; }

Box box_from(const json& j) { return Box(j.at("lo").get<std::vector<double>>(), j.at("hi").get<std::vector<double>>()); }

json node_json(const PiecewiseConstantDensity& d, int i) {
    const auto& p = d.partition();
    const auto& n = p.node(i);
    json out{{"id", i}, {"box", box_json(n.box)}, {"count", n.count}, {"active", n.active}, {"mass", d.mass(i)}};
    if (n.axis >= 0) {
        out["cut"] = {{"axis", n.axis},
                      {"position", p.node(n.lower).box.hi[static_cast<std::size_t>(n.axis)]},
                      {"lower", node_json(d, n.lower)},
                      {"upper", node_json(d, n.upper)}};
    }
    return out;
}

struct FlatNode {
    int id = 0;
    int axis = -1;
    int lower = -1;
    double position = 0.0;
    std::size_t count = 0;
    bool active = true;
    double mass = 0.0;
    Box box;
};

void flatten(const json& j, std::vector<FlatNode>& out) {
    FlatNode n;
    n.id = j.at("id").get<int>();
    n.box = box_from(j.at("box"));
    n.count = j.at("count").get<std::size_t>();
    n.active = j.at("active").get<bool>();
    n.mass = j.at("mass").get<double>();
    if (const auto it = j.find("cut"); it != j.end()) {
        n.axis = it->at("axis").get<int>();
        n.position = it->at("position").get<double>();
        n.lower = it->at("lower").at("id").get<int>();
        out.push_back(n);
        flatten(it->at("lower"), out);
        flatten(it->at("upper"), out);
    } else {
        out.push_back(n);
    }
}

}  // namespace

std::size_t CsvTable::column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ArgumentError(fmt::format("missing column '{}'", name));
    return static_cast<std::size_t>(it - header.begin());
}

void write_csv(const std::filesystem::path& path, const CsvTable& table) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ArgumentError(fmt::format("cannot write {}", path.string()));
    auto line = [&](const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (fields[i].find(',') != std::string::npos) {
                throw ArgumentError(fmt::format("field '{}' contains a comma", fields[i]));
            }
            if (i) out << ',';
            out << fields[i];
        }
        out << '\n';
    };
    line(table.header);
    for (const auto& r : table.rows) {
        if (r.size() != table.header.size()) throw ArgumentError("row width does not match header");
        line(r);
    }
}

CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ArgumentError(fmt::format("cannot read {}", path.string()));
    CsvTable t;
    std::string line;
    if (!std::getline(in, line)) throw ArgumentError(fmt::format("{} is empty", path.string()));
    t.header = split_line(line);
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto row = split_line(line);
        if (row.size() != t.header.size()) {
            throw ArgumentError(fmt::format("{}:{}: expected {} fields, found {}", path.string(), lineno,
                                            t.header.size(), row.size()));
        }
        t.rows.push_back(std::move(row));
    }
    return t;
}

void write_samples(const std::filesystem::path& path, std::span<const AugmentedSample> samples,
                   std::size_t design_dim, std::size_t random_dim) {
    CsvTable t;
    t.header = numbered("phi_", design_dim);
    for (auto& h : numbered("z_", random_dim)) t.header.push_back(h);
    for (auto& h : numbered("theta_", random_dim)) t.header.push_back(h);
    for (const char* h : {"failed", "performance", "margin"}) t.header.emplace_back(h);
    for (const auto& s : samples) {
        if (s.phi.size() != design_dim || s.z.size() != random_dim || s.theta.size() != random_dim) {
            throw ArgumentError("sample dimension does not match the table");
        }
        std::vector<std::string> row;
        append(row, s.phi);
        append(row, s.z);
        append(row, s.theta);
        row.push_back(s.failed ? "1" : "0");
        row.push_back(format_double(s.performance));
        row.push_back(format_double(s.margin));
        t.rows.push_back(std::move(row));
    }
    write_csv(path, t);
}

std::vector<AugmentedSample> read_samples(const std::filesystem::path& path) {
    const CsvTable t = read_csv(path);
    const std::size_t n = count_prefixed(t, "phi_");
    const std::size_t m = count_prefixed(t, "z_");
    std::vector<AugmentedSample> out;
    out.reserve(t.rows.size());
    for (const auto& row : t.rows) {
        AugmentedSample s;
        s.phi = read_prefixed(t, row, "phi_", n);
        s.z = read_prefixed(t, row, "z_", m);
        s.theta = read_prefixed(t, row, "theta_", m);
        s.failed = parse_flag(row[t.column("failed")]);
        s.performance = parse_double(row[t.column("performance")]);
        s.margin = parse_double(row[t.column("margin")]);
        out.push_back(std::move(s));
    }
    return out;
}

json partition_to_json(const PiecewiseConstantDensity& density) {
    return json{{"log_score", density.log_score}, {"root", node_json(density, 0)}};
}

PiecewiseConstantDensity partition_from_json(const json& doc) {
    std::vector<FlatNode> flat;
    flatten(doc.at("root"), flat);
    std::sort(flat.begin(), flat.end(), [](const FlatNode& a, const FlatNode& b) { return a.id < b.id; });
    for (std::size_t i = 0; i < flat.size(); ++i) {
        if (flat[i].id != static_cast<int>(i)) throw ArgumentError("partition node ids are not contiguous");
    }
    BinaryPartition p(flat.front().box);
    // Children are appended at split time, so cutting internal nodes in the
    // order of their lower child's id restores the original numbering.
    std::vector<const FlatNode*> internal;
    for (const auto& n : flat) {
        if (n.axis >= 0) internal.push_back(&n);
    }
    std::sort(internal.begin(), internal.end(), [](const FlatNode* a, const FlatNode* b) { return a->lower < b->lower; });
    for (const FlatNode* n : internal) {
        const auto [lo, hi] = p.split(n->id, n->axis);
        if (lo != n->lower) throw ArgumentError(fmt::format("partition node {} has inconsistent children", n->id));
        if (p.node(lo).box.hi[static_cast<std::size_t>(n->axis)] != n->position) {
            throw ArgumentError(fmt::format("partition node {} is not cut at its midpoint", n->id));
        }
        (void)hi;
    }
    std::vector<double> masses(flat.size(), 0.0);
    for (const auto& n : flat) {
        if (!(p.node(n.id).box == n.box)) throw ArgumentError(fmt::format("partition node {} box mismatch", n.id));
        if (n.axis < 0) p.set_active(n.id, n.active);
        p.set_count(n.id, n.count);
        masses[static_cast<std::size_t>(n.id)] = n.mass;
    }
    PiecewiseConstantDensity d(std::move(p), std::move(masses));
    d.log_score = doc.at("log_score").get<double>();
    return d;
}

json region_to_json(const RegionIndicator& region) {
    json cells = json::array();
    for (const auto& b : region.boxes()) cells.push_back(box_json(b));
    return json{{"domain", box_json(region.domain())},
                {"whole", region.is_whole()},
                {"volume", region.volume()},
                {"cells", cells}};
}

RegionIndicator region_from_json(const json& doc) {
    Box domain = box_from(doc.at("domain"));
    if (doc.at("whole").get<bool>()) return RegionIndicator::whole(std::move(domain));
    std::vector<Box> boxes;
    for (const auto& c : doc.at("cells")) boxes.push_back(box_from(c));
    return RegionIndicator::cells(std::move(domain), std::move(boxes));
}

void write_support_points(const std::filesystem::path& path, std::span<const SupportPoint> points) {
    const std::size_t n = points.empty() ? 0 : points.front().location.size();
    CsvTable t;
    t.header = numbered("phi_", n);
    for (auto& h : numbered("width_", n)) t.header.push_back(h);
    t.header.emplace_back("value");
    t.header.emplace_back("level");
    for (const auto& s : points) {
        std::vector<std::string> row;
        append(row, s.location);
        if (s.extent.empty()) {
            row.insert(row.end(), n, "0");
        } else {
            append(row, s.extent);
        }
        row.push_back(format_double(s.value));
        row.push_back(fmt::format("{}", s.level));
        t.rows.push_back(std::move(row));
    }
    write_csv(path, t);
}

std::vector<SupportPoint> read_support_points(const std::filesystem::path& path) {
    const CsvTable t = read_csv(path);
    const std::size_t n = count_prefixed(t, "phi_");
    std::vector<SupportPoint> out;
    for (const auto& row : t.rows) {
        SupportPoint s;
        s.location = read_prefixed(t, row, "phi_", n);
        s.extent = read_prefixed(t, row, "width_", n);
        if (std::all_of(s.extent.begin(), s.extent.end(), [](double w) { return w == 0.0; })) s.extent.clear();
        s.value = parse_double(row[t.column("value")]);
        s.level = parse_size(row[t.column("level")]);
        out.push_back(std::move(s));
    }
    return out;
}

json surface_to_json(const RegressionSurface& s) {
    return json{{"domain", box_json(s.domain())},
                {"locations", s.locations()},
                {"extents", s.extents()},
                {"log_values", s.log_values()},
                {"length_scales", s.length_scales()},
                {"signal_variance", s.signal_variance()},
                {"noise", s.noise()},
                {"trend_order", s.trend_order()},
                {"trend", s.trend()},
                {"coefficients", s.coefficients()},
                {"loo_score", std::isfinite(s.loo_score) ? json(s.loo_score) : json(nullptr)}};
}

RegressionSurface surface_from_json(const json& doc) {
    RegressionSurface s(box_from(doc.at("domain")), doc.at("locations").get<std::vector<std::vector<double>>>(),
                        doc.at("extents").get<std::vector<std::vector<double>>>(),
                        doc.at("log_values").get<std::vector<double>>(),
                        doc.at("length_scales").get<std::vector<double>>(), doc.at("signal_variance").get<double>(),
                        doc.at("noise").get<double>(), doc.at("trend").get<std::vector<double>>(),
                        doc.at("coefficients").get<std::vector<double>>());
    const json& loo = doc.at("loo_score");
    s.loo_score = loo.is_null() ? -std::numeric_limits<double>::infinity() : loo.get<double>();
    return s;
}

void write_oracle(const std::filesystem::path& path, const FpfGridOracle& oracle) {
    const std::size_t n = oracle.points.empty() ? 0 : oracle.points.front().phi.size();
    CsvTable t;
    t.header = numbered("phi_", n);
    for (const char* h : {"pf_hat", "n", "cov"}) t.header.emplace_back(h);
    for (const auto& g : oracle.points) {
        std::vector<std::string> row;
        append(row, g.phi);
        row.push_back(format_double(g.pf_hat));
        row.push_back(fmt::format("{}", g.n));
        row.push_back(format_double(g.cov));
        t.rows.push_back(std::move(row));
    }
    write_csv(path, t);
}

FpfGridOracle read_oracle(const std::filesystem::path& path) {
    const CsvTable t = read_csv(path);
    const std::size_t n = count_prefixed(t, "phi_");
    if (n == 0) throw ArgumentError(fmt::format("{}: no phi_ columns", path.string()));
    FpfGridOracle o;
    for (const auto& row : t.rows) {
        GridPoint g;
        g.phi = read_prefixed(t, row, "phi_", n);
        g.pf_hat = parse_double(row[t.column("pf_hat")]);
        g.n = parse_size(row[t.column("n")]);
        g.cov = parse_double(row[t.column("cov")]);
        o.total_evaluations += g.n;
        o.points.push_back(std::move(g));
    }
    // A full grid has resolution^n rows.
    const double r = std::round(std::pow(static_cast<double>(o.points.size()), 1.0 / static_cast<double>(n)));
    o.resolution = static_cast<std::size_t>(r);
    return o;
}

void write_optima(const std::filesystem::path& path, std::span<const OptimumRow> rows) {
    CsvTable t;
    t.header.emplace_back("allowable");
    for (auto& h : numbered("phi_", rows.empty() ? 0 : rows.front().phi.size())) t.header.push_back(h);
    for (const char* h : {"objective", "fpf", "active", "feasible"}) t.header.emplace_back(h);
    for (const auto& r : rows) {
        std::vector<std::string> row{format_double(r.allowable)};
        append(row, r.phi);
        row.push_back(format_double(r.objective));
        row.push_back(format_double(r.fpf));
        row.push_back(r.active ? "1" : "0");
        row.push_back(r.feasible ? "1" : "0");
        t.rows.push_back(std::move(row));
    }
    write_csv(path, t);
}

std::vector<OptimumRow> read_optima(const std::filesystem::path& path) {
    const CsvTable t = read_csv(path);
    const std::size_t n = count_prefixed(t, "phi_");
    std::vector<OptimumRow> out;
    for (const auto& row : t.rows) {
        OptimumRow r;
        r.allowable = parse_double(row[t.column("allowable")]);
        r.phi = read_prefixed(t, row, "phi_", n);
        r.objective = parse_double(row[t.column("objective")]);
        r.fpf = parse_double(row[t.column("fpf")]);
        r.active = parse_flag(row[t.column("active")]);
        r.feasible = parse_flag(row[t.column("feasible")]);
        out.push_back(std::move(r));
    }
    return out;
}

void write_json(const std::filesystem::path& path, const json& doc) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ArgumentError(fmt::format("cannot write {}", path.string()));
    out << doc.dump(1) << '\n';
}

json read_json(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ArgumentError(fmt::format("cannot read {}", path.string()));
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ArgumentError(fmt::format("{}: {}", path.string(), e.what()));
    }
}

std::string file_checksum(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ArgumentError(fmt::format("cannot read {}", path.string()));
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::istreambuf_iterator<char> it(in), end; it != end; ++it) {
        h ^= static_cast<unsigned char>(*it);
        h *= 0x100000001b3ULL;
    }
    return fmt::format("{:016x}", h);
}

}  // namespace fpf
