#pragma once

// Batch driver: `twistres <command> --config <path> [--out <dir>]`.
// Exit codes: 0 success, 1 config error, 2 numeric failure.

#include <chrono>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <boost/version.hpp>
#include <nlohmann/json.hpp>

#include "twistres/config.hpp"
#include "twistres/cross_section.hpp"
#include "twistres/longitudinal.hpp"
#include "twistres/report.hpp"
#include "twistres/scaled_spectrum.hpp"
#include "twistres/width.hpp"

namespace twistres {

inline const std::vector<std::string>& commands() {
    static const std::vector<std::string> c = {"modes", "width", "classify", "limit", "nu-scan",
                                               "eps-scan", "surface", "validate", "spectrum1d"};
    return c;
}

struct RunOutput {
    Report report;
    std::vector<CsvTable> tables;
};

namespace detail {

struct Problem {
    TransverseModeSet modes;
    CouplingMatrices coupling;
    std::vector<BoundState> states;
};

inline Problem build_problem(const RunConfig& c, bool need_states = true) {
    Problem p;
    p.modes = solve_transverse_modes(c.cross_section, c.mode_count, c.mode_path);
    p.coupling = coupling_matrices(p.modes);
    if (need_states) p.states = bound_states(c.potential);
    return p;
}

inline const EmbeddedEigenvalue& resolve_target(const RunConfig& c, const Problem& p, const SpectrumClassification& cls) {
    if (p.states.empty()) throw invalid_input("the potential has no bound states");
    const auto* t = cls.find(c.n, c.j);
    if (t == nullptr)
        throw invalid_input("target (n, j) = (" + std::to_string(c.n) + ", " + std::to_string(c.j) +
                            ") is not available: " + std::to_string(p.states.size()) + " bound state(s)");
    if (!t->embedded) throw invalid_input("target E = " + std::to_string(t->E) + " is not embedded (E < E_1)");
    if (!t->simple) throw numeric_failure("target E = " + std::to_string(t->E) + " is degenerate");
    return *t;
}

inline nlohmann::json eigen_list(const std::vector<EmbeddedEigenvalue>& v) {
    auto out = nlohmann::json::array();
    for (const auto& e : v) out.push_back({{"n", e.n}, {"j", e.j}, {"E", e.E}, {"simple", e.simple}});
    return out;
}

inline nlohmann::json complex_json(cplx z) { return {{"re", z.real()}, {"im", z.imag()}}; }

inline nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
    auto out = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        auto row = nlohmann::json::array();
        for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
        out.push_back(row);
    }
    return out;
}

inline void cmd_modes(const RunConfig& c, RunOutput& o) {
    const auto p = build_problem(c, false);
    auto list = nlohmann::json::array();
    CsvTable modes{"modes", {"n", "E", "degenerate"}, {}, "transverse Dirichlet eigenvalues"};
    for (const auto& m : p.modes.modes) {
        list.push_back({{"n", m.index}, {"E", m.energy}, {"degenerate", m.degenerate}});
        modes.rows.push_back({double(m.index), m.energy, m.degenerate ? 1.0 : 0.0});
    }
    CsvTable coup{"coupling", {"n", "k", "T1", "T2"}, {}, "T1 = <chi_n, d_tau chi_k>, T2 = <chi_n, d_tau^2 chi_k>"};
    for (int n = 1; n <= p.coupling.K; ++n)
        for (int k = 1; k <= p.coupling.K; ++k) coup.rows.push_back({double(n), double(k), p.coupling.t1(n, k), p.coupling.t2(n, k)});
    o.report.results = {{"modes", list},
                        {"path", p.modes.numeric ? "numeric" : "closed_form"},
                        {"T1", matrix_json(p.coupling.T1)},
                        {"T2", matrix_json(p.coupling.T2)},
                        {"asymmetry_residual", p.coupling.asymmetry_residual},
                        {"eigensolver_residual", p.modes.max_residual}};
    o.tables = {modes, coup};
}

inline void cmd_spectrum1d(const RunConfig& c, RunOutput& o) {
    const auto& V = c.potential;
    const auto states = bound_states(V);
    auto list = nlohmann::json::array();
    CsvTable t{"spectrum1d", {"j", "mu"}, {}, "bound states of -d^2 + V"};
    for (const auto& s : states) {
        list.push_back({{"j", s.j}, {"mu", s.energy}, {"decay_rate", s.decay_rate()}});
        t.rows.push_back({double(s.j), s.energy});
    }
    o.report.results = {{"potential", V.name()}, {"states", list}};
    if (V.kind() == PotentialSpec::Kind::poschl_teller) {
        const auto fd = finite_difference_bound_states(V);
        auto check = nlohmann::json::array();
        double worst = 0.0;
        for (std::size_t i = 0; i < fd.states.size(); ++i) {
            const double ref = i < states.size() ? states[i].energy : NAN;
            check.push_back({{"j", fd.states[i].j}, {"mu_fd", fd.states[i].energy}, {"mu_closed_form", ref}});
            worst = std::max(worst, std::abs(fd.states[i].energy - ref));
        }
        o.report.results["finite_difference"] = check;
        o.report.results["count_matches"] = fd.states.size() == states.size();
        o.report.results["max_difference"] = worst;
    }
    o.tables = {t};
    if (V.kind() == PotentialSpec::Kind::poschl_teller || V.kind() == PotentialSpec::Kind::sampled) {
        CsvTable pot{"potential", {"x", "V"}, {}, "potential on a uniform grid"};
        const double R = std::min(V.decay_radius(), 50.0);
        for (int i = 0; i <= 2000; ++i) {
            const double x = -R + 2 * R * i / 2000.0;
            pot.rows.push_back({x, V.value(x)});
        }
        o.tables.push_back(pot);
    }
}

inline void cmd_classify(const RunConfig& c, RunOutput& o) {
    const auto p = build_problem(c);
    require(!p.states.empty(), "the potential has no bound states");
    const auto cls = classify_spectrum(p.modes, p.states);
    o.report.results = {{"thresholds", p.modes.energies()},
                        {"discrete", eigen_list(cls.discrete)},
                        {"embedded", eigen_list(cls.embedded)}};
}

inline void cmd_width(const RunConfig& c, RunOutput& o) {
    const auto p = build_problem(c);
    const auto cls = classify_spectrum(p.modes, p.states);
    const auto& t = resolve_target(c, p, cls);
    const auto w = width_coefficient(t, p.modes, p.coupling, c.potential, p.states[static_cast<std::size_t>(c.j - 1)],
                                     c.twist, c.width);
    o.report.results = w;
    CsvTable ch{"channels", {"k", "coupling_sq", "im_resolvent", "contribution"}, {}, "open-channel contributions to a"};
    for (const auto& x : w.channels) ch.rows.push_back({double(x.k), x.coupling_sq, x.im_resolvent, x.contribution});
    o.tables = {ch};
}

inline void cmd_limit(const RunConfig& c, RunOutput& o) {
    const auto p = build_problem(c, false);
    const double E1 = p.modes[1].energy, E2 = p.modes[2].energy;
    const double C1 = c.c1_override ? *c.c1_override : p.coupling.t1(1, 2);
    const double a = limit_width_delta(E1, E2, C1);
    if (std::abs(C1) <= 1e-12)
        o.report.warnings.push_back("C1 = 0: the cross-section couples modes 1 and 2 trivially, the width vanishes");
    o.report.results = {{"E1", E1}, {"E2", E2}, {"C1", C1}, {"a", a}};
}

inline void cmd_nu_scan(const RunConfig& c, RunOutput& o) {
    require(!c.nu_list.empty(), "nu-scan needs a nonempty scan.nu list");
    const auto p = build_problem(c, false);
    const auto rows = width_vs_nu(c.nu_list, p.modes, p.coupling, c.twist, c.n, c.width);
    auto list = nlohmann::json::array();
    CsvTable t{"nu_scan", {"nu", "mu", "E", "a", "limit", "distance"}, {}, "a(nu) against the delta limit"};
    for (const auto& r : rows) {
        list.push_back({{"nu", r.nu}, {"mu", r.mu}, {"E", r.E}, {"a", r.a}, {"limit", r.limit}, {"distance", r.distance}});
        t.rows.push_back({r.nu, r.mu, r.E, r.a, r.limit, r.distance});
    }
    bool monotone = true;
    for (std::size_t i = 1; i < rows.size(); ++i)
        if (rows[i].nu > rows[i - 1].nu && rows[i].distance >= rows[i - 1].distance) monotone = false;
    o.report.results = {{"n", c.n}, {"rows", list}, {"limit", rows.front().limit}, {"distance_decreasing", monotone}};
    o.tables = {t};
}

inline ScanSetup scan_setup(const RunConfig& c, const Problem& p) {
    ScanSetup s;
    s.potential = c.potential;
    s.state = p.states[static_cast<std::size_t>(c.j - 1)];
    s.twist = c.twist;
    s.modes = &p.modes;
    s.coupling = p.coupling;
    s.K = c.K;
    s.n = c.n;
    s.scaling = c.scaling;
    s.grid = c.grid;
    s.radius = c.search_radius;
    s.locate = c.locate;
    return s;
}

inline void cmd_eps_scan(const RunConfig& c, RunOutput& o) {
    require(!c.eps_list.empty(), "eps-scan needs a nonempty scan.eps list");
    require(c.K >= c.n, "solver.K must include the target channel n");
    const auto p = build_problem(c);
    const auto cls = classify_spectrum(p.modes, p.states);
    const auto& target = resolve_target(c, p, cls);
    const auto setup = scan_setup(c, p);
    const auto t = epsilon_scan(c.eps_list, setup);

    auto rows = nlohmann::json::array();
    CsvTable scan{"scan", {"epsilon", "re_E", "im_E", "residual"}, {}, "tracked resonance per epsilon"};
    for (const auto& r : t.rows) {
        rows.push_back({{"epsilon", r.eps}, {"E", complex_json(r.E)}, {"residual", r.residual}});
        scan.rows.push_back({r.eps, r.E.real(), r.E.imag(), r.residual});
        if (r.eps > 0 && r.E.imag() > 1e-8)
            o.report.warnings.push_back("Im E > 0 at eps = " + std::to_string(r.eps));
    }
    const auto golden = width_coefficient(target, p.modes, p.coupling, c.potential,
                                          p.states[static_cast<std::size_t>(c.j - 1)], c.twist, c.width);
    o.report.results = {{"E_unperturbed", target.E},
                        {"E0", complex_json(t.E0)},
                        {"rows", rows},
                        {"a_fit", t.a_fit},
                        {"a_fit_stderr", t.a_fit_stderr},
                        {"a_cubic", t.a_cubic},
                        {"cubic_coefficient", t.cubic_coefficient},
                        {"cubic_residual", t.cubic_residual},
                        {"a_golden_rule", golden.a},
                        {"relative_difference", golden.a > 1e-12 ? std::abs(t.a_fit - golden.a) / golden.a : NAN},
                        {"K", c.K},
                        {"im_theta", c.scaling.im_theta}};
    o.tables = {scan};

    const double eps_max = t.rows.back().eps;
    ChannelGridSpec grid = c.grid;
    grid.reference_energy = target.E;
    const auto sys = assemble(eps_max, c.scaling, c.potential, c.twist, p.modes, p.coupling, c.K, grid);
    if (c.spectrum_count > 0) {
        CsvTable spec{"spectrum", {"re", "im"}, {}, "eigenvalues of the scaled channel system near the resonance"};
        for (cplx e : nearest_eigenvalues(sys, t.rows.back().E, c.spectrum_count)) spec.rows.push_back({e.real(), e.imag()});
        o.tables.push_back(spec);
    }
    CsvTable rays{"rays", {"k", "re", "im"}, {}, "essential-spectrum rays E_k + t exp(-2i Im theta)"};
    const auto rs = essential_rays(c.scaling.im_theta, sys.thresholds);
    for (std::size_t k = 0; k < rs.size(); ++k)
        for (int i = 0; i <= 20; ++i) {
            const cplx z = rs[k].origin + (0.25 * i) * rs[k].direction;
            rays.rows.push_back({double(k + 1), z.real(), z.imag()});
        }
    o.tables.push_back(rays);
}

inline void cmd_surface(const RunConfig& c, RunOutput& o) {
    const auto& s = c.surface;
    const auto pts = twisted_surface_points(c.cross_section, s.eps, c.twist, s.x_min, s.x_max, s.x_samples, s.boundary_samples);
    CsvTable t{"surface", {"x", "y", "z"}, {}, "twisted tube boundary points"};
    for (const auto& q : pts) t.rows.push_back({q[0], q[1], q[2]});
    o.report.results = {{"points", pts.size()}, {"eps", s.eps}, {"twist", c.twist.name()}};
    o.tables = {t};
}

inline void cmd_validate(const RunConfig& c, RunOutput& o) {
    const auto a = validate_assumption_A(c.potential);
    nlohmann::json aj = {{"integral", a.integral},
                         {"weighted_integral", a.weighted_integral},
                         {"finite", a.finite},
                         {"sign_ok", a.sign_ok},
                         {"passes", a.passes()}};
    if (a.exact_integral) aj["exact_integral"] = *a.exact_integral;
    if (a.exact_weighted_integral) aj["exact_weighted_integral"] = *a.exact_weighted_integral;
    if (!a.passes()) o.report.warnings.push_back("potential violates assumption A (int V < 0, finite weighted norm)");

    const auto p = build_problem(c);
    LineFunction v{[](double x) { return std::pow(M_PI, -0.25) * std::exp(-0.5 * x * x); }, {}, 1.0};
    double lambda = 1.0;
    std::string probe = "gaussian";
    if (!p.states.empty()) {
        const auto cls = classify_spectrum(p.modes, p.states);
        const auto* t = cls.find(c.n, c.j);
        if (t && t->embedded && t->E - p.modes[1].energy > c.width.threshold_guard) {
            v = coupling_vector(c.twist, p.states[static_cast<std::size_t>(c.j - 1)], c.width.acceleration);
            lambda = t->E - p.modes[1].energy;
            probe = "coupling_vector";
        }
    }
    std::vector<ResolventEngine> engines = {ResolventEngine::exterior_scaling, ResolventEngine::rho_extrapolation};
    const auto kind = c.potential.kind();
    if (kind == PotentialSpec::Kind::delta_limit || kind == PotentialSpec::Kind::free)
        engines.push_back(ResolventEngine::delta_kernel);
    auto checks = nlohmann::json::array();
    std::vector<cplx> values;
    for (auto e : engines) {
        ResolventOptions ro = c.width.resolvent;
        ro.engine = e;
        const auto r = resolvent_form(c.potential, lambda, Side::plus, v, true, ro);
        values.push_back(r.value);
        checks.push_back({{"engine", engine_name(e)}, {"value", complex_json(r.value)}});
    }
    double spread = 0.0;
    for (cplx x : values) spread = std::max(spread, std::abs(x - values.front()));
    if (spread > 1e-4) o.report.warnings.push_back("resolvent engines disagree by " + std::to_string(spread));
    o.report.results = {{"assumption_A", aj},
                        {"resolvent_check", {{"lambda", lambda}, {"probe", probe}, {"engines", checks}, {"max_difference", spread}}},
                        {"coupling_asymmetry", p.coupling.asymmetry_residual}};
}

}  // namespace detail

/// Runs one command; nothing is written unless the whole computation succeeds.
inline RunOutput execute(const std::string& command, const RunConfig& c) {
    RunOutput o;
    o.report.command = command;
    o.report.config_hash = c.hash;
    o.report.config = c.entries;
    const auto start = std::chrono::steady_clock::now();
    if (command == "modes") detail::cmd_modes(c, o);
    else if (command == "spectrum1d") detail::cmd_spectrum1d(c, o);
    else if (command == "classify") detail::cmd_classify(c, o);
    else if (command == "width") detail::cmd_width(c, o);
    else if (command == "limit") detail::cmd_limit(c, o);
    else if (command == "nu-scan") detail::cmd_nu_scan(c, o);
    else if (command == "eps-scan") detail::cmd_eps_scan(c, o);
    else if (command == "surface") detail::cmd_surface(c, o);
    else if (command == "validate") detail::cmd_validate(c, o);
    else throw invalid_input("unknown command '" + command + "'");
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    o.report.provenance = {{"version", kVersion},
                           {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                         std::to_string(EIGEN_MINOR_VERSION)},
                           {"boost", BOOST_LIB_VERSION},
                           {"tolerances",
                            {{"threshold_guard", c.width.threshold_guard},
                             {"eigen_residual", c.locate.accept},
                             {"deflation_window", c.width.resolvent.deflation_window}}},
                           {"wall_time_s", wall}};
    return o;
}

inline int run(const std::string& command, const std::string& config_path, const std::string& out_dir,
               std::ostream& log = std::cout, std::ostream& err = std::cerr) {
    try {
        const auto cfg = load_config(config_path);
        const auto out = execute(command, cfg);
        ArtifactWriter w(out_dir, cfg.hash);
        for (const auto& t : out.tables) w.write_csv(t);
        w.write_report(out.report);
        for (const auto& msg : out.report.warnings) err << "warning: " << msg.get<std::string>() << '\n';
        log << command << ": wrote";
        for (const auto& f : w.files()) log << ' ' << (std::filesystem::path(out_dir) / f).string();
        log << '\n';
        return 0;
    } catch (const invalid_input& e) {
        err << "config error: " << e.what() << '\n';
        return 1;
    } catch (const numeric_failure& e) {
        err << "numeric failure: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "numeric failure: " << e.what() << '\n';
        return 2;
    }
}

}  // namespace twistres
