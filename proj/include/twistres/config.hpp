#pragma once

// Run configuration: INI text with [section] headers and key = value lines.
//
//   [cross_section]  shape = rectangle|disk|polygon, a, b, radius,
//                    vertices = "y z; y z; ...", grid_n, axis = "y z",
//                    path = auto|numeric, modes
//   [potential]      kind = poschl_teller|delta|sampled|free, nu, file, decay_radius
//   [twist]          kind = linear|compact|sampled, X, file (x,rate,rate_derivative)
//   [target]         n, j
//   [solver]         K, engine, im_theta, theta_max, far_spacing, scaling_radius,
//                    layer_length, radius, tolerance, block, threshold_guard,
//                    acceleration = from_operator|reversed
//   [scan]           eps = list, nu = list, spectrum_count
//   [surface]        eps, x_min, x_max, x_samples, boundary_samples
//   [limit]          C1 (overrides the computed coupling)

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "twistres/cross_section.hpp"
#include "twistres/errors.hpp"
#include "twistres/longitudinal.hpp"
#include "twistres/scaled_spectrum.hpp"
#include "twistres/twist.hpp"
#include "twistres/width.hpp"

namespace twistres {

struct SurfaceOptions {
    double eps = 1.0;
    double x_min = -5.0, x_max = 5.0;
    int x_samples = 101;
    int boundary_samples = 64;
};

struct RunConfig {
    CrossSectionSpec cross_section{Rectangle{M_PI, M_PI / 2}};
    ModePath mode_path = ModePath::automatic;
    int mode_count = 0;  // 0: max(K, n, 2)

    PotentialSpec potential = PotentialSpec::delta_limit();
    TwistProfile twist = TwistProfile::linear();
    int n = 2, j = 1;

    int K = 6;
    WidthOptions width;
    ScalingParams scaling;
    ChannelGridSpec grid;
    double search_radius = 0.15;
    LocateOptions locate;

    std::vector<double> eps_list, nu_list;
    int spectrum_count = 40;
    SurfaceOptions surface;
    std::optional<double> c1_override;

    std::map<std::string, std::string> entries;  // section.key -> value, as read
    std::string hash;

    [[nodiscard]] int modes_needed() const { return mode_count > 0 ? mode_count : std::max({K, n, 2}); }
};

/// 64-bit FNV-1a, hex.
inline std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    std::ostringstream os;
    os << std::hex;
    os.width(16);
    os.fill('0');
    os << h;
    return os.str();
}

/// Hash of the canonical key listing: sorted, one `section.key=value` per line.
inline std::string config_hash(const std::map<std::string, std::string>& entries) {
    std::string text;
    for (const auto& [k, v] : entries) text += k + "=" + v + "\n";
    return fnv1a_hex(text);
}

inline std::vector<double> parse_list(const std::string& text, const std::string& what) {
    std::string s = text;
    std::replace(s.begin(), s.end(), ',', ' ');
    std::replace(s.begin(), s.end(), ';', ' ');
    std::istringstream is(s);
    std::vector<double> out;
    std::string tok;
    while (is >> tok) {
        std::size_t used = 0;
        double v = 0;
        try {
            v = std::stod(tok, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != tok.size() || !std::isfinite(v)) throw invalid_input(what + ": '" + tok + "' is not a number");
        out.push_back(v);
    }
    return out;
}

/// CSV with a header and `cols` numeric columns; `#` lines are comments.
inline std::vector<std::vector<double>> read_columns_csv(const std::string& path, std::size_t cols) {
    std::ifstream in(path);
    if (!in) throw invalid_input("cannot open " + path);
    std::vector<std::vector<double>> columns(cols);
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (header) {
            header = false;
            continue;
        }
        const auto v = parse_list(line, path);
        if (v.size() != cols) throw invalid_input(path + ": expected " + std::to_string(cols) + " columns in '" + line + "'");
        for (std::size_t c = 0; c < cols; ++c) columns[c].push_back(v[c]);
    }
    return columns;
}

namespace detail {

class ConfigReader {
public:
    ConfigReader(const boost::property_tree::ptree& tree, std::filesystem::path base) : base_(std::move(base)) {
        for (const auto& [sec, body] : tree) {
            if (!body.data().empty()) throw invalid_input("key '" + sec + "' outside any section");
            for (const auto& [key, val] : body) values_[sec + "." + key] = trim(val.data());
        }
    }

    const std::map<std::string, std::string>& values() const { return values_; }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string text(const std::string& key, const std::string& fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    double number(const std::string& key, double fallback, double lo = -INFINITY, double hi = INFINITY) {
        if (!has(key)) return fallback;
        const auto v = parse_list(text(key, ""), key);
        if (v.size() != 1) throw invalid_input(key + " must be a single number");
        if (!(v[0] >= lo && v[0] <= hi))
            throw invalid_input(key + " = " + text(key, "") + " outside [" + fmt(lo) + ", " + fmt(hi) + "]");
        return v[0];
    }

    int integer(const std::string& key, int fallback, int lo, int hi) {
        const double v = number(key, fallback, lo, hi);
        if (v != std::floor(v)) throw invalid_input(key + " must be an integer");
        return static_cast<int>(v);
    }

    std::vector<double> list(const std::string& key) { return has(key) ? parse_list(text(key, ""), key) : std::vector<double>{}; }

    std::string path(const std::string& key) {
        const std::string p = text(key, "");
        if (p.empty()) throw invalid_input(key + " is required");
        const auto full = std::filesystem::path(p).is_absolute() ? std::filesystem::path(p) : base_ / p;
        if (!std::filesystem::exists(full)) throw invalid_input(key + ": file " + full.string() + " does not exist");
        return full.string();
    }

    void reject_unknown(const std::set<std::string>& known) const {
        for (const auto& [k, v] : values_)
            if (!known.count(k)) throw invalid_input("unknown config key '" + k + "'");
    }

private:
    static std::string trim(std::string s) {
        const auto b = s.find_first_not_of(" \t\"");
        const auto e = s.find_last_not_of(" \t\"");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    }
    static std::string fmt(double v) {
        std::ostringstream os;
        os << v;
        return os.str();
    }

    std::filesystem::path base_;
    std::map<std::string, std::string> values_;
};

inline const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "cross_section.shape", "cross_section.a", "cross_section.b", "cross_section.radius",
        "cross_section.vertices", "cross_section.grid_n", "cross_section.axis", "cross_section.path",
        "cross_section.modes", "potential.kind", "potential.nu", "potential.file", "potential.decay_radius",
        "twist.kind", "twist.X", "twist.file", "target.n", "target.j", "solver.K", "solver.engine",
        "solver.im_theta", "solver.theta_max", "solver.far_spacing", "solver.scaling_radius",
        "solver.layer_length", "solver.radius", "solver.acceleration", "solver.tolerance", "solver.block", "solver.threshold_guard",
        "scan.eps", "scan.nu", "scan.spectrum_count", "surface.eps", "surface.x_min", "surface.x_max",
        "surface.x_samples", "surface.boundary_samples", "limit.C1"};
    return keys;
}

}  // namespace detail

inline RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = ".") {
    boost::property_tree::ptree tree;
    std::istringstream is(text);
    try {
        boost::property_tree::ini_parser::read_ini(is, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw invalid_input(std::string("config: ") + e.what());
    }
    detail::ConfigReader r(tree, base_dir);
    RunConfig c;

    // cross-section
    const std::string shape = r.text("cross_section.shape", "rectangle");
    const int grid_n = r.integer("cross_section.grid_n", 64, 16, 2048);
    Shape s;
    if (shape == "rectangle") {
        s = Rectangle{r.number("cross_section.a", M_PI, 0, 1e6), r.number("cross_section.b", M_PI / 2, 0, 1e6)};
    } else if (shape == "disk") {
        s = Disk{r.number("cross_section.radius", 1.0, 0, 1e6)};
    } else if (shape == "polygon") {
        const auto v = r.list("cross_section.vertices");
        if (v.size() < 6 || v.size() % 2) throw invalid_input("cross_section.vertices needs >= 3 pairs 'y z'");
        Polygon p;
        for (std::size_t i = 0; i < v.size(); i += 2) p.vertices.push_back({v[i], v[i + 1]});
        s = p;
    } else {
        throw invalid_input("cross_section.shape must be rectangle, disk or polygon");
    }
    c.cross_section = CrossSectionSpec{s, grid_n};
    if (r.has("cross_section.axis")) {
        const auto ax = r.list("cross_section.axis");
        if (ax.size() != 2) throw invalid_input("cross_section.axis needs 'y z'");
        c.cross_section.axis = {ax[0], ax[1]};
    }
    c.cross_section.validate();
    const std::string path = r.text("cross_section.path", "auto");
    if (path != "auto" && path != "numeric") throw invalid_input("cross_section.path must be auto or numeric");
    c.mode_path = path == "numeric" ? ModePath::numeric : ModePath::automatic;
    c.mode_count = r.integer("cross_section.modes", 0, 0, 64);

    // potential
    const std::string pk = r.text("potential.kind", "delta");
    if (pk == "poschl_teller") {
        c.potential = PotentialSpec::poschl_teller(r.number("potential.nu", 1.0, 1e-3, 1e6));
    } else if (pk == "delta") {
        c.potential = PotentialSpec::delta_limit();
    } else if (pk == "free") {
        c.potential = PotentialSpec::free();
    } else if (pk == "sampled") {
        const std::string file = r.path("potential.file");
        c.potential = PotentialSpec::from_csv(file, r.number("potential.decay_radius", 10.0, 1e-6, 1e4));
    } else {
        throw invalid_input("potential.kind must be poschl_teller, delta, sampled or free");
    }

    // twist
    const std::string tk = r.text("twist.kind", "linear");
    if (tk == "linear") {
        c.twist = TwistProfile::linear();
    } else if (tk == "compact") {
        c.twist = TwistProfile::compact(r.number("twist.X", 20.0, 1e-6, 1e4));
    } else if (tk == "sampled") {
        const auto cols = read_columns_csv(r.path("twist.file"), 3);
        c.twist = TwistProfile::sampled(cols[0], cols[1], cols[2]);
    } else {
        throw invalid_input("twist.kind must be linear, compact or sampled");
    }

    c.n = r.integer("target.n", 2, 1, 64);
    c.j = r.integer("target.j", 1, 1, 64);

    // solver
    c.K = r.integer("solver.K", 6, 1, 64);
    c.mode_count = c.mode_count > 0 ? c.mode_count : std::max({c.K, c.n, 2});
    if (c.K > c.mode_count) throw invalid_input("solver.K exceeds cross_section.modes");
    if (c.n > c.mode_count) throw invalid_input("target.n exceeds cross_section.modes");
    const std::string engine = r.text("solver.engine", "exterior_scaling");
    if (engine == "exterior_scaling") c.width.resolvent.engine = ResolventEngine::exterior_scaling;
    else if (engine == "rho_extrapolation") c.width.resolvent.engine = ResolventEngine::rho_extrapolation;
    else if (engine == "delta_kernel") c.width.resolvent.engine = ResolventEngine::delta_kernel;
    else throw invalid_input("solver.engine must be exterior_scaling, rho_extrapolation or delta_kernel");
    const std::string acc = r.text("solver.acceleration", "from_operator");
    if (acc == "from_operator") c.width.acceleration = AccelerationTerm::from_operator;
    else if (acc == "reversed") c.width.acceleration = AccelerationTerm::reversed;
    else throw invalid_input("solver.acceleration must be from_operator or reversed");
    c.width.threshold_guard = r.number("solver.threshold_guard", 1e-4, 0, 1);
    c.scaling.theta_max = r.number("solver.theta_max", 0.6, 1e-6, 0.78);
    c.scaling.im_theta = r.number("solver.im_theta", 0.3, 0, c.scaling.theta_max);
    c.scaling.validate();
    c.grid.far_spacing = r.number("solver.far_spacing", 0.02, 1e-5, 1);
    c.grid.scaling_radius = r.number("solver.scaling_radius", 0, 0, 1e4);
    c.grid.layer_length = r.number("solver.layer_length", 0, 0, 1e4);
    c.search_radius = r.number("solver.radius", 0.15, 1e-8, 10);
    c.locate.accept = r.number("solver.tolerance", 1e-8, 1e-15, 1e-2);
    c.locate.tolerance = std::min(c.locate.tolerance, c.locate.accept);
    c.locate.block = r.integer("solver.block", 6, 2, 64);

    // scans
    if (r.has("scan.eps")) {
        c.eps_list = r.list("scan.eps");
        for (double e : c.eps_list) require(e >= 0 && e <= 1, "scan.eps values must lie in [0, 1]");
    }
    if (r.has("scan.nu")) {
        c.nu_list = r.list("scan.nu");
        for (double v : c.nu_list) require(v > 0 && v <= 1e6, "scan.nu values must lie in (0, 1e6]");
    }
    c.spectrum_count = r.integer("scan.spectrum_count", 40, 0, 400);

    c.surface.eps = r.number("surface.eps", 1.0, -1e3, 1e3);
    c.surface.x_min = r.number("surface.x_min", -5, -1e4, 1e4);
    c.surface.x_max = r.number("surface.x_max", 5, c.surface.x_min, 1e4);
    c.surface.x_samples = r.integer("surface.x_samples", 101, 1, 100000);
    c.surface.boundary_samples = r.integer("surface.boundary_samples", 64, 3, 100000);

    if (r.has("limit.C1")) c.c1_override = r.number("limit.C1", 0);

    r.reject_unknown(detail::known_keys());
    c.entries = r.values();
    c.hash = config_hash(c.entries);
    return c;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw invalid_input("cannot open config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), std::filesystem::absolute(path).parent_path());
}

}  // namespace twistres
