// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "twistres/scaled_spectrum.hpp"
#include "twistres/width.hpp"

using namespace twistres;

namespace {

constexpr double kLimit = 0.0818919701322320950;
constexpr double kDeltaImag = 0.0460642331993805535;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

struct Rect {
    TransverseModeSet modes;
    CouplingMatrices coupling;
};

Rect rectangle(int K) {
    auto modes = solve_transverse_modes(CrossSectionSpec{Rectangle{M_PI, M_PI / 2}}, K);
    auto c = coupling_matrices(modes);
    return {modes, c};
}

double pt_golden(const Rect& r, double nu, const TwistProfile& twist) {
    const auto states = poschl_teller_spectrum(nu);
    const auto cls = classify_spectrum(r.modes, states);
    return width_coefficient(*cls.find(2, 1), r.modes, r.coupling, PotentialSpec::poschl_teller(nu), states[0], twist).a;
}

ScanSetup pt_setup(const Rect& r, double nu, int K, double theta) {
    ScanSetup s;
    s.potential = PotentialSpec::poschl_teller(nu);
    s.state = poschl_teller_spectrum(nu)[0];
    s.twist = TwistProfile::compact(20);
    s.modes = &r.modes;
    s.coupling = r.coupling;
    s.K = K;
    s.n = 2;
    s.scaling.im_theta = theta;
    return s;
}

Outcome rectangle_coupling() {
    std::vector<double> err;
    for (int g : {64, 128, 256}) {
        const auto set = solve_transverse_modes(CrossSectionSpec{Rectangle{M_PI, M_PI / 2}, g}, 2, ModePath::numeric);
        const double t = coupling_matrices(set).t1(1, 2);
        err.push_back(std::abs(std::abs(t) - 2.0 / 3.0) / (2.0 / 3.0));
    }
    const double order = std::log2(err[1] / err[2]);
    return {err[2] <= 1e-3 && order > 1.7 && order < 2.3,
            fmt("rel err %.2e/%.2e/%.2e at grid_n 64/128/256, order %.2f", err[0], err[1], err[2], order)};
}

Outcome poschl_teller() {
    double worst = 0.0;
    bool counts = true;
    for (double nu : {1.0, 10.0}) {
        const auto fd = finite_difference_bound_states(PotentialSpec::poschl_teller(nu));
        const auto exact = poschl_teller_spectrum(nu);
        counts = counts && fd.states.size() == exact.size() &&
                 static_cast<int>(exact.size()) == poschl_teller_count(nu);
        for (std::size_t j = 0; j < std::min(fd.states.size(), exact.size()); ++j)
            worst = std::max(worst, std::abs(fd.states[j].energy - exact[j].energy));
    }
    return {counts && worst <= 1e-4, fmt("max |E_fd - E_exact| = %.2e, counts %s", worst, counts ? "match" : "differ")};
}

Outcome delta_resolvent() {
    const auto phi = delta_limit_bound_state();
    const auto V = PotentialSpec::delta_limit();
    auto v = phi.derivative_function();
    v.f = [d = v.f](double x) { return -2.0 * d(x); };
    ResolventOptions ecs, rho;
    rho.engine = ResolventEngine::rho_extrapolation;
    const double a = resolvent_form(V, 2.75, Side::plus, v, false, ecs).value.imag();
    const double b = resolvent_form(V, 2.75, Side::plus, v, false, rho).value.imag();
    const double ref = 4 * kDeltaImag;
    return {std::abs(a - ref) <= 1e-4 && std::abs(b - ref) <= 1e-4,
            fmt("exterior %.7f, rho %.7f, closed form %.7f", a, b, ref)};
}

Outcome closed_form_limit(const Rect& r) {
    const auto phi = delta_limit_bound_state();
    const auto cls = classify_spectrum(r.modes, {phi});
    const double a = width_coefficient(*cls.find(2, 1), r.modes, r.coupling, PotentialSpec::delta_limit(), phi,
                                       TwistProfile::linear())
                         .a;
    const double lim = limit_width_delta(r.modes[1].energy, r.modes[2].energy, r.coupling.t1(1, 2));
    return {std::abs(a - lim) <= 1e-6 && std::abs(lim - kLimit) <= 1e-7,
            fmt("width %.9f, limit %.9f, |diff| %.1e", a, lim, std::abs(a - lim))};
}

Outcome nu_convergence(const Rect& r) {
    const auto rows = width_vs_nu({10, 100, 1000}, r.modes, r.coupling, TwistProfile::linear());
    bool mono = rows[1].distance < rows[0].distance && rows[2].distance < rows[1].distance;
    return {mono && rows[2].distance <= 5e-3, fmt("a = %.6f, %.6f, %.6f; distance %.2e, %.2e, %.2e", rows[0].a,
                                                   rows[1].a, rows[2].a, rows[0].distance, rows[1].distance,
                                                   rows[2].distance)};
}

Outcome golden_vs_direct(const Rect& r6) {
    const auto t = epsilon_scan({0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.08}, pt_setup(r6, 100, 6, 0.3));
    const double a = pt_golden(r6, 100, TwistProfile::compact(20));
    bool decaying = true;
    for (const auto& row : t.rows)
        if (row.eps > 0) decaying = decaying && row.E.imag() < 0;
    const double rel = std::abs(t.a_fit - a) / a;
    return {decaying && rel <= 0.15, fmt("a_fit %.5f, golden rule %.5f, rel diff %.3f, Im E < 0 %s", t.a_fit, a, rel,
                                         decaying ? "everywhere" : "violated")};
}

Outcome theta_and_rays(const Rect& r6) {
    std::vector<cplx> E;
    for (double theta : {0.2, 0.3, 0.4}) {
        const auto t = epsilon_scan({0.05}, pt_setup(r6, 100, 6, theta));
        E.push_back(t.rows.back().E);
    }
    double spread = 0.0;
    for (cplx e : E) spread = std::max(spread, std::abs(e - E[1]) / std::abs(E[1]));
    const auto& r = r6;
    std::vector<double> dev;
    for (double L : {10.0, 30.0, 90.0}) {
        ScalingParams sp;
        ChannelGridSpec g;
        g.far_spacing = g.core_spacing = 0.25;
        g.scaling_radius = 5;
        g.layer_length = L;
        dev.push_back(ray_deviation(assemble(0.0, sp, PotentialSpec::free(), TwistProfile::compact(1), r.modes,
                                             r.coupling, 1, g),
                                    2.0));
    }
    const bool shrinking = dev[1] < dev[0] && dev[2] < dev[1];
    return {spread < 1e-4 && shrinking,
            fmt("relative spread %.1e over theta 0.2..0.4; ray distance %.3f, %.3f, %.3f for layer 10/30/90", spread,
                dev[0], dev[1], dev[2])};
}

Outcome disk_null() {
    const auto modes = solve_transverse_modes(CrossSectionSpec{Disk{1.0}}, 6);
    const auto c = coupling_matrices(modes);
    double worst = 0.0;
    for (int k = 1; k < 6; ++k) worst = std::max(worst, c.t1(k, 6) * c.t1(k, 6));
    ScanSetup s;
    s.potential = PotentialSpec::poschl_teller(10);
    s.state = poschl_teller_spectrum(10)[0];
    s.modes = &modes;
    s.coupling = c;
    s.K = 6;
    s.n = 6;
    const auto t = epsilon_scan({0.02, 0.04, 0.06, 0.08}, s);
    const bool null_slope = std::abs(t.a_fit) <= 3 * t.a_fit_stderr + 1e-6;
    return {worst <= 1e-10 && null_slope,
            fmt("max |T1[k][6]|^2 = %.1e, a_fit = %.1e +- %.1e", worst, t.a_fit, t.a_fit_stderr)};
}

Outcome positivity() {
    std::mt19937_64 rng(20240917);
    std::uniform_real_distribution<double> side(0.3, 1.0), nu_d(0.1, 30.0), X_d(1.0, 25.0), unit(0.0, 1.0);
    int runs = 0, channels = 0;
    double worst = INFINITY;
    bool exact = true;
    while (runs < 24) {
        CrossSectionSpec spec;
        if (runs % 3 == 2) spec = CrossSectionSpec{Disk{0.5 + unit(rng)}};
        else spec = CrossSectionSpec{Rectangle{M_PI, M_PI * side(rng)}};
        const auto modes = solve_transverse_modes(spec, 5);
        const auto c = coupling_matrices(modes);
        const bool delta = unit(rng) < 0.2;
        const double nu = nu_d(rng);
        const auto V = delta ? PotentialSpec::delta_limit() : PotentialSpec::poschl_teller(nu);
        const auto states = delta ? std::vector<BoundState>{delta_limit_bound_state()} : poschl_teller_spectrum(nu);
        const auto twist = unit(rng) < 0.3 ? TwistProfile::linear() : TwistProfile::compact(X_d(rng));
        for (const auto& e : classify_spectrum(modes, states).embedded) {
            if (!e.simple || e.n > 5) continue;
            WidthResult w;
            try {
                w = width_coefficient(e, modes, c, V, states[static_cast<std::size_t>(e.j - 1)], twist);
            } catch (const numeric_failure&) {
                continue;  // threshold-adjacent draw
            }
            double sum = 0.0;
            for (const auto& ch : w.channels) {
                worst = std::min(worst, ch.contribution);
                sum += ch.contribution;
                ++channels;
            }
            exact = exact && w.a == sum;
        }
        ++runs;
    }
    return {worst >= -1e-8 && exact && channels > 0,
            fmt("%d configs, %d channel terms, min contribution %.1e, sums %s", runs, channels, worst,
                exact ? "exact" : "differ")};
}

}  // namespace

int main() {
    const Rect r4 = rectangle(4);
    const Rect r6 = rectangle(6);
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"rectangle coupling constant", rectangle_coupling},
        {"Poschl-Teller spectrum", poschl_teller},
        {"delta-model resolvent", delta_resolvent},
        {"closed-form limit", [&] { return closed_form_limit(r4); }},
        {"nu convergence", [&] { return nu_convergence(r4); }},
        {"golden rule vs direct resonance", [&] { return golden_vs_direct(r6); }},
        {"theta independence and rays", [&] { return theta_and_rays(r6); }},
        {"disk symmetry null", disk_null},
        {"positivity and bookkeeping", positivity},
    };
    int failed = 0, index = 0;
    for (const auto& [name, check] : criteria) {
        ++index;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("%s %d %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", index, name, o.detail.c_str(), dt);
        std::fflush(stdout);
        failed += !o.pass;
    }
    return failed ? 1 : 0;
}
