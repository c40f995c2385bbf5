#pragma once

// Golden-rule width of embedded eigenvalues E = E_n + mu_j under a small
// twist:  Im E(eps) = -eps^2 a + O(eps^3),
//     a = sum_{k <= k*} |<d_tau chi_n, chi_k>|^2 <v_j, Im r(E - E_k + i0) v_j>,
//     v_j = -(2 alpha' d_x + alpha'') phi_j,
// the x-part of U = -2 eps alpha' d_x d_tau - eps alpha'' d_tau applied to phi_j.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "twistres/cross_section.hpp"
#include "twistres/errors.hpp"
#include "twistres/longitudinal.hpp"
#include "twistres/twist.hpp"

namespace twistres {

struct EmbeddedEigenvalue {
    int n = 1, j = 1;
    double E = 0.0;
    bool embedded = false;  // E >= E_1
    bool simple = true;
};

struct SpectrumClassification {
    std::vector<EmbeddedEigenvalue> discrete;  // E < E_1
    std::vector<EmbeddedEigenvalue> embedded;  // E >= E_1

    const EmbeddedEigenvalue* find(int n, int j) const {
        for (const auto* list : {&discrete, &embedded})
            for (const auto& e : *list)
                if (e.n == n && e.j == j) return &e;
        return nullptr;
    }
};

/// All E_n + mu_j, split at E_1. A value is simple when its mode is
/// nondegenerate and no other pair lands within 1e-10 of it.
inline SpectrumClassification classify_spectrum(const TransverseModeSet& modes, const std::vector<BoundState>& states) {
    require(modes.size() >= 1, "classify_spectrum needs at least one transverse mode");
    require(!states.empty(), "classify_spectrum needs at least one bound state");
    const double e1 = modes[1].energy;
    std::vector<EmbeddedEigenvalue> all;
    for (int n = 1; n <= static_cast<int>(modes.size()); ++n)
        for (const auto& b : states) {
            EmbeddedEigenvalue e;
            e.n = n;
            e.j = b.j;
            e.E = modes[n].energy + b.energy;
            e.embedded = e.E >= e1;
            e.simple = !modes[n].degenerate;
            all.push_back(e);
        }
    for (auto& a : all)
        for (const auto& b : all)
            if ((a.n != b.n || a.j != b.j) && std::abs(a.E - b.E) <= 1e-10 * std::max(1.0, std::abs(a.E))) a.simple = false;
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.E < b.E; });
    SpectrumClassification out;
    for (const auto& e : all) (e.embedded ? out.embedded : out.discrete).push_back(e);
    return out;
}

/// Largest k with E_k < E (1-based), 0 when no channel is open.
inline int threshold_index(double E, const std::vector<double>& thresholds) {
    require(std::is_sorted(thresholds.begin(), thresholds.end()), "thresholds must be sorted nondecreasing");
    return static_cast<int>(std::lower_bound(thresholds.begin(), thresholds.end(), E) - thresholds.begin());
}

/// Sign of the alpha'' phi term in v_j. `from_operator` follows U; `reversed`
/// is -2 alpha' phi' + alpha'' phi.
enum class AccelerationTerm { from_operator, reversed };

/// v_j(x) = -2 alpha'(x) phi_j'(x) - alpha''(x) phi_j(x).
inline LineFunction coupling_vector(const TwistProfile& twist, const BoundState& phi,
                                    AccelerationTerm term = AccelerationTerm::from_operator) {
    if (phi.form() == BoundState::Form::grid && twist.kind() == TwistProfile::Kind::sampled) {
        const auto& gx = phi.grid_x();
        const double lo = gx.front(), hi = gx.back();
        const double tlo = twist.breakpoints().front(), thi = twist.breakpoints().back();
        if (thi < lo || tlo > hi) throw invalid_input("twist grid and bound-state grid do not overlap");
    }
    LineFunction v;
    const double s = term == AccelerationTerm::from_operator ? -1.0 : 1.0;
    v.f = [twist, phi, s](double x) { return -2.0 * twist.rate(x) * phi.derivative(x) + s * twist.rate_derivative(x) * phi.value(x); };
    v.kinks = phi.kinks();
    for (double b : twist.breakpoints())
        if (std::abs(b) < 1e4) v.kinks.push_back(b);
    v.decay_length = 1.0 / phi.decay_rate();
    return v;
}

struct ChannelContribution {
    int k = 0;
    double coupling_sq = 0.0;   // |<d_tau chi_n, chi_k>|^2
    double im_resolvent = 0.0;  // <v_j, Im r(E - E_k + i0) v_j>
    double contribution = 0.0;
};

/// Closed channels (E_k > E): no imaginary part, real part kept for diagnostics.
struct ClosedChannel {
    int k = 0;
    double coupling_sq = 0.0;
    double re_resolvent = 0.0;
};

struct WidthResult {
    double E = 0.0;
    int n = 0, j = 0, k_star = 0;
    double a = 0.0;
    double C0 = 0.0;  // first-order real shift is -C0 eps^2
    std::vector<ChannelContribution> channels;
    std::vector<ClosedChannel> closed;
    std::string engine;
};

inline void to_json(nlohmann::json& js, const WidthResult& w) {
    js = {{"E", w.E}, {"n", w.n}, {"j", w.j}, {"k_star", w.k_star}, {"a", w.a}, {"C0", w.C0}, {"engine", w.engine}};
    js["channels"] = nlohmann::json::array();
    for (const auto& c : w.channels)
        js["channels"].push_back(
            {{"k", c.k}, {"coupling_sq", c.coupling_sq}, {"im_resolvent", c.im_resolvent}, {"contribution", c.contribution}});
    js["closed_channels"] = nlohmann::json::array();
    for (const auto& c : w.closed)
        js["closed_channels"].push_back({{"k", c.k}, {"coupling_sq", c.coupling_sq}, {"re_resolvent", c.re_resolvent}});
}

struct WidthOptions {
    ResolventOptions resolvent;
    double threshold_guard = 1e-4;
    bool closed_channel_diagnostics = true;
    AccelerationTerm acceleration = AccelerationTerm::from_operator;
};

/// <phi, alpha'^2 phi>
inline double twist_weighted_norm(const TwistProfile& twist, const BoundState& phi) {
    const double R = 60.0 / phi.decay_rate();
    std::vector<double> br = phi.kinks();
    for (double b : twist.breakpoints())
        if (std::abs(b) < R) br.push_back(b);
    for (double q : {-1.0, 1.0}) br.push_back(q * 0.01), br.push_back(q * 0.1);
    return integrate(
        [&](double x) {
            const double r = twist.rate(x), p = phi.value(x);
            return r * r * p * p;
        },
        -R, R, br, 0.5);
}

inline WidthResult width_coefficient(const EmbeddedEigenvalue& target, const TransverseModeSet& modes,
                                     const CouplingMatrices& coupling, const PotentialSpec& V, const BoundState& phi,
                                     const TwistProfile& twist, const WidthOptions& o = {}) {
    const int K = static_cast<int>(modes.size());
    require(coupling.K == K, "coupling matrices and mode set disagree in size");
    require(target.n >= 1 && target.n <= K, "mode index n out of range");
    require(target.embedded, "E = " + std::to_string(target.E) + " is not embedded (E < E_1)");
    if (!target.simple) throw numeric_failure("E = " + std::to_string(target.E) + " is degenerate");
    const auto thresholds = modes.energies();
    for (int k = 1; k <= K; ++k)
        if (std::abs(target.E - thresholds[k - 1]) < o.threshold_guard)
            throw numeric_failure("E = " + std::to_string(target.E) + " collides with the threshold E_" + std::to_string(k));

    WidthResult w;
    w.E = target.E;
    w.n = target.n;
    w.j = target.j;
    w.k_star = threshold_index(target.E, thresholds);
    w.engine = engine_name(o.resolvent.engine);
    w.C0 = twist_weighted_norm(twist, phi) * coupling.t2(target.n, target.n);
    const LineFunction v = coupling_vector(twist, phi, o.acceleration);
    for (int k = 1; k <= K; ++k) {
        const double c = coupling.t1(k, target.n);
        const double coupling_sq = c * c;
        const double lambda = target.E - thresholds[k - 1];
        if (k <= w.k_star) {
            const auto r = resolvent_form(V, lambda, Side::plus, v, true, o.resolvent);
            ChannelContribution ch{k, coupling_sq, r.value.imag(), coupling_sq * r.value.imag()};
            w.channels.push_back(ch);
        } else if (o.closed_channel_diagnostics && coupling_sq > 0) {
            const auto r = resolvent_form(V, lambda, Side::plus, v, true, o.resolvent);
            w.closed.push_back({k, coupling_sq, r.value.real()});
        }
    }
    // the sum is the definition of a, accumulated in channel order
    for (const auto& ch : w.channels) w.a += ch.contribution;
    return w;
}

/// nu -> inf closed form: |C_1|^2 sqrt(E_2 - E_1 - 1/4) / (E_2 - E_1)^2.
inline double limit_width_delta(double E1, double E2, double C1) {
    require(std::isfinite(E1) && std::isfinite(E2) && std::isfinite(C1), "limit_width_delta needs finite inputs");
    const double gap = E2 - E1;
    require(gap > 0.25, "limit_width_delta needs E_2 - E_1 > 1/4");
    return C1 * C1 * std::sqrt(gap - 0.25) / (gap * gap);
}

struct NuScanRow {
    double nu = 0.0, mu = 0.0, E = 0.0, a = 0.0, limit = 0.0, distance = 0.0;
};

/// a(nu) for E = E_n + mu_1(nu) with the Pöschl–Teller resolvent, and the
/// distance to the delta limit.
inline std::vector<NuScanRow> width_vs_nu(const std::vector<double>& nus, const TransverseModeSet& modes,
                                          const CouplingMatrices& coupling, const TwistProfile& twist, int n = 2,
                                          const WidthOptions& o = {}) {
    require(!nus.empty(), "width_vs_nu needs at least one nu");
    require(n >= 2 && n <= static_cast<int>(modes.size()), "width_vs_nu needs 2 <= n <= K");
    double limit = 0.0;
    if (n == 2) {
        limit = limit_width_delta(modes[1].energy, modes[2].energy, coupling.t1(1, 2));
    } else {
        const auto delta = delta_limit_bound_state();
        const auto cls = classify_spectrum(modes, {delta});
        WidthOptions lo = o;
        lo.resolvent.engine = ResolventEngine::delta_kernel;
        limit = width_coefficient(*cls.find(n, 1), modes, coupling, PotentialSpec::delta_limit(), delta, twist, lo).a;
    }
    std::vector<NuScanRow> rows;
    for (double nu : nus) {
        const auto V = PotentialSpec::poschl_teller(nu);
        const auto states = poschl_teller_spectrum(nu);
        const auto cls = classify_spectrum(modes, states);
        const auto* target = cls.find(n, 1);
        if (!target->embedded) throw invalid_input("E_n + mu_1 is not embedded at nu = " + std::to_string(nu));
        const auto w = width_coefficient(*target, modes, coupling, V, states[0], twist, o);
        rows.push_back({nu, states[0].energy, w.E, w.a, limit, std::abs(w.a - limit)});
    }
    return rows;
}

}  // namespace twistres
