#pragma once

// The one-dimensional operator h = -d^2/dx^2 + V along the waveguide axis:
// Pöschl–Teller wells, their delta-interaction limit, sampled potentials, and
// boundary values of the resolvent r(z) = (h - z)^{-1} on the real axis.
//
// With this sign convention Im <v, r(lambda + i0) v> >= 0 on the continuous
// spectrum.

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Sparse>

#include "twistres/errors.hpp"
#include "twistres/line_grid.hpp"
#include "twistres/quadrature.hpp"

namespace twistres {

enum class Side { plus, minus };

inline double side_sign(Side s) { return s == Side::plus ? 1.0 : -1.0; }

// ---------------------------------------------------------------------------
// grid-function CSV

struct XYTable {
    std::vector<double> x, y;
};

inline XYTable read_xy_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw invalid_input("cannot open " + path);
    XYTable t;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ss(line);
        double a = 0, b = 0;
        if (!(ss >> a >> b)) {
            if (t.x.empty()) continue;  // header
            throw invalid_input("malformed row in " + path + ": " + line);
        }
        if (!t.x.empty() && a <= t.x.back()) throw invalid_input("x must be strictly increasing in " + path);
        t.x.push_back(a);
        t.y.push_back(b);
    }
    if (t.x.size() < 2) throw invalid_input(path + " needs at least two rows");
    return t;
}

inline void write_xy_csv(const std::string& path, const XYTable& t, const std::string& header = "x,V") {
    std::ofstream out(path);
    if (!out) throw invalid_input("cannot write " + path);
    out.precision(17);
    out << header << '\n';
    for (std::size_t i = 0; i < t.x.size(); ++i) out << t.x[i] << ',' << t.y[i] << '\n';
}

inline double interpolate(const std::vector<double>& x, const std::vector<double>& y, double at) {
    if (x.empty() || at < x.front() || at > x.back()) return 0.0;
    auto it = std::upper_bound(x.begin(), x.end(), at);
    if (it == x.end()) return y.back();
    const std::size_t i = static_cast<std::size_t>(it - x.begin());
    const double t = (at - x[i - 1]) / (x[i] - x[i - 1]);
    return (1 - t) * y[i - 1] + t * y[i];
}

// ---------------------------------------------------------------------------
// potentials

class PotentialSpec {
public:
    enum class Kind { poschl_teller, delta_limit, sampled, free };

    static PotentialSpec poschl_teller(double nu) {
        require(std::isfinite(nu) && nu > 0, "Pöschl–Teller needs nu > 0");
        PotentialSpec p;
        p.kind_ = Kind::poschl_teller;
        p.nu_ = nu;
        return p;
    }
    static PotentialSpec delta_limit() {
        PotentialSpec p;
        p.kind_ = Kind::delta_limit;
        return p;
    }
    static PotentialSpec free() { return PotentialSpec{}; }
    static PotentialSpec sampled(std::vector<double> x, std::vector<double> values, double decay_radius) {
        require(x.size() >= 2 && x.size() == values.size(), "sampled potential needs matching x and V columns");
        for (std::size_t i = 1; i < x.size(); ++i) require(x[i] > x[i - 1], "sampled potential x must increase");
        for (double v : values) require(std::isfinite(v), "sampled potential values must be finite");
        require(decay_radius > 0 && std::isfinite(decay_radius), "sampled potential needs a positive decay radius");
        PotentialSpec p;
        p.kind_ = Kind::sampled;
        p.x_ = std::move(x);
        p.v_ = std::move(values);
        p.radius_ = decay_radius;
        return p;
    }
    static PotentialSpec from_csv(const std::string& path, double decay_radius) {
        auto t = read_xy_csv(path);
        return sampled(std::move(t.x), std::move(t.y), decay_radius);
    }

    Kind kind() const { return kind_; }
    double nu() const { return nu_; }
    const std::vector<double>& sample_x() const { return x_; }
    const std::vector<double>& sample_values() const { return v_; }

    /// Regular part of V; the delta interaction of the limit model is not included.
    double value(double x) const {
        switch (kind_) {
            case Kind::poschl_teller: {
                const double y = std::abs(nu_ * x);
                if (y > 350) return 0.0;
                const double s = 1.0 / std::cosh(y);
                return -0.5 * nu_ * s * s;
            }
            case Kind::sampled:
                return std::abs(x) > radius_ ? 0.0 : interpolate(x_, v_, x);
            default:
                return 0.0;
        }
    }

    /// Strength c of an additional c·delta(x) term.
    double delta_strength() const { return kind_ == Kind::delta_limit ? -1.0 : 0.0; }

    /// Radius beyond which V is treated as zero.
    double decay_radius() const {
        switch (kind_) {
            case Kind::poschl_teller: return (std::log(2 * nu_) + 37.0) / (2 * nu_);
            case Kind::sampled: return radius_;
            default: return 0.0;
        }
    }

    /// Suggested spacing near the origin.
    double core_scale() const { return kind_ == Kind::poschl_teller ? 1.0 / nu_ : 1.0; }

    std::string name() const {
        switch (kind_) {
            case Kind::poschl_teller: return "poschl_teller";
            case Kind::delta_limit: return "delta_limit";
            case Kind::sampled: return "sampled";
            default: return "free";
        }
    }

private:
    Kind kind_ = Kind::free;
    double nu_ = 0.0;
    double radius_ = 0.0;
    std::vector<double> x_, v_;
};

// ---------------------------------------------------------------------------
// functions on the line

/// A real function on the line with its non-smooth points and a decay length
/// (|f(x)| <~ exp(-|x| / decay_length)).
struct LineFunction {
    std::function<double(double)> f;
    std::vector<double> kinks;
    double decay_length = 1.0;

    double operator()(double x) const { return f(x); }

    static LineFunction from_samples(std::vector<double> x, std::vector<double> values, double decay_length) {
        require(x.size() >= 2 && x.size() == values.size(), "grid function needs matching columns");
        LineFunction g;
        g.f = [x = std::move(x), v = std::move(values)](double at) { return interpolate(x, v, at); };
        g.decay_length = decay_length;
        return g;
    }
};

namespace detail {

/// Smallest R with |f| <= rel * max|f| on |x| >= R (sampled); throws if f
/// does not decay inside |x| < 4000.
inline double support_radius(const LineFunction& v, double rel = 1e-10) {
    constexpr double step = 0.02, limit = 4000.0;
    double peak = 0.0;
    std::vector<double> probes = v.kinks;
    for (double x = 0; x <= 20.0; x += 1e-3) probes.push_back(x), probes.push_back(-x);
    for (double x : probes) peak = std::max(peak, std::abs(v(x)));
    double radius = 0.0;
    for (double x = 0; x <= limit; x += step) {
        const double m = std::max(std::abs(v(x)), std::abs(v(-x)));
        peak = std::max(peak, m);
        if (m > rel * peak) radius = x;
    }
    if (peak == 0.0) return 0.0;
    if (radius > limit - 100) throw invalid_input("test function does not decay");
    return radius + step;
}

inline double log_cosh(double y) {
    y = std::abs(y);
    return y + std::log1p(std::exp(-2 * y)) - std::log(2.0);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// bound states

class BoundState {
public:
    enum class Form { poschl_teller, delta_limit, grid };

    int j = 1;
    double energy = 0.0;    // mu_j < 0
    double exponent = 0.0;  // e_j; decay rate over nu for Pöschl–Teller, decay rate otherwise

    Form form() const { return form_; }
    double decay_rate() const { return std::sqrt(-energy); }

    double value(double x) const { return sign_ * raw_value(x); }
    double derivative(double x) const { return sign_ * raw_derivative(x); }

private:
    double raw_value(double x) const {
        switch (form_) {
            case Form::delta_limit: return std::sqrt(0.5) * std::exp(-0.5 * std::abs(x));
            case Form::poschl_teller: {
                const double xi = std::tanh(nu_ * x);
                return norm_ * std::exp(-exponent * detail::log_cosh(nu_ * x)) * poly(0.5 * (1 - xi));
            }
            default: return interpolate(x_, values_, x);
        }
    }

    double raw_derivative(double x) const {
        switch (form_) {
            case Form::delta_limit:
                return x == 0.0 ? 0.0 : -0.5 * std::copysign(1.0, x) * raw_value(x);
            case Form::poschl_teller: {
                const double y = nu_ * x, xi = std::tanh(y);
                const double sech2 = std::exp(-2 * detail::log_cosh(y));
                const double u = 0.5 * (1 - xi);
                return norm_ * nu_ * std::exp(-exponent * detail::log_cosh(y)) *
                       (-exponent * xi * poly(u) - 0.5 * sech2 * poly_derivative(u));
            }
            default: return interpolate(x_, slopes_, x);
        }
    }

public:

    LineFunction function() const {
        return {[self = *this](double x) { return self.value(x); }, kinks(), 1.0 / decay_rate()};
    }
    LineFunction derivative_function() const {
        return {[self = *this](double x) { return self.derivative(x); }, kinks(), 1.0 / decay_rate()};
    }

    /// The same state with the opposite sign convention.
    BoundState flipped() const {
        BoundState b = *this;
        b.sign_ = -sign_;
        return b;
    }

    std::vector<double> kinks() const { return form_ == Form::delta_limit ? std::vector<double>{0.0} : std::vector<double>{}; }

    std::string tag() const {
        switch (form_) {
            case Form::poschl_teller: return "poschl_teller_closed_form";
            case Form::delta_limit: return "sqrt(1/2)exp(-|x|/2)";
            default: return "grid";
        }
    }

    static BoundState delta_limit() {
        BoundState b;
        b.form_ = Form::delta_limit;
        b.energy = -0.25;
        b.exponent = 0.5;
        return b;
    }

    static BoundState poschl_teller(double nu, int j) {
        const double s = std::sqrt(1 + 2 / nu);
        const double s_minus_1 = (2 / nu) / (s + 1);
        BoundState b;
        b.form_ = Form::poschl_teller;
        b.j = j;
        b.nu_ = nu;
        b.exponent = 0.5 * s_minus_1 - (j - 1);
        b.energy = -nu * nu * b.exponent * b.exponent;
        // terminating 2F1(1 - j, e + t + 1; e + 1; u)
        const double t = 0.5 * s_minus_1;
        const double a = 1 - j, bb = b.exponent + t + 1, c = b.exponent + 1;
        b.coeffs_ = {1.0};
        for (int m = 0; m < j - 1; ++m)
            b.coeffs_.push_back(b.coeffs_.back() * (a + m) * (bb + m) / ((c + m) * (m + 1)));
        std::vector<double> br;
        for (double q : {0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0}) br.push_back(q / nu), br.push_back(-q / nu);
        const double reach = 45.0 / (b.exponent * nu) + 40.0 / nu;
        b.norm_ = 1.0;
        const double n2 = integrate([&](double x) { return b.value(x) * b.value(x); }, -reach, reach, br,
                                    std::max(0.5 / nu, std::min(1.0, 0.25 / (b.exponent * nu))));
        b.norm_ = 1.0 / std::sqrt(n2);
        if (b.value(1.0 / nu) < 0) b.norm_ = -b.norm_;  // positive on the right flank
        return b;
    }

    static BoundState grid(int j, double energy, std::vector<double> x, std::vector<double> values) {
        BoundState b;
        b.form_ = Form::grid;
        b.j = j;
        b.energy = energy;
        b.exponent = std::sqrt(-energy);
        b.slopes_.resize(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            const std::size_t l = i == 0 ? 0 : i - 1, r = std::min(i + 1, x.size() - 1);
            b.slopes_[i] = (values[r] - values[l]) / (x[r] - x[l]);
        }
        b.x_ = std::move(x);
        b.values_ = std::move(values);
        return b;
    }

    const std::vector<double>& grid_x() const { return x_; }
    const std::vector<double>& grid_values() const { return values_; }

private:
    double poly(double u) const {
        double s = 0.0;
        for (std::size_t m = coeffs_.size(); m-- > 0;) s = s * u + coeffs_[m];
        return s;
    }
    double poly_derivative(double u) const {
        double s = 0.0;
        for (std::size_t m = coeffs_.size(); m-- > 1;) s = s * u + m * coeffs_[m];
        return s;
    }

    Form form_ = Form::grid;
    double nu_ = 0.0, norm_ = 1.0, sign_ = 1.0;
    std::vector<double> coeffs_;
    std::vector<double> x_, values_, slopes_;
};

/// Number of Pöschl–Teller bound states: all j with j < t + 1.
inline int poschl_teller_count(double nu) {
    const double t = 0.5 * (-1 + std::sqrt(1 + 2 / nu));
    return static_cast<int>(std::ceil(t + 1) - 1);
}

inline std::vector<BoundState> poschl_teller_spectrum(double nu) {
    require(std::isfinite(nu) && nu > 0, "Pöschl–Teller needs nu > 0");
    std::vector<BoundState> out;
    for (int j = 1; j <= poschl_teller_count(nu); ++j) out.push_back(BoundState::poschl_teller(nu, j));
    return out;
}

inline BoundState delta_limit_bound_state() { return BoundState::delta_limit(); }

// ---------------------------------------------------------------------------
// finite-difference spectrum (Sturm bisection on a uniform grid)

struct FiniteDifferenceOptions {
    double half_length = 0.0;  // 0: pick from the potential
    double spacing = 0.0;      // 0: pick from the potential
    double tolerance = 1e-7;   // eigenvalues above -tolerance are not bound states
};

namespace detail {

struct Tridiagonal {
    std::vector<double> diag, off;  // off[i] couples i and i+1
};

inline int sturm_count(const Tridiagonal& t, double sigma) {
    int count = 0;
    double d = 1.0;
    for (std::size_t i = 0; i < t.diag.size(); ++i) {
        const double o2 = i == 0 ? 0.0 : t.off[i - 1] * t.off[i - 1];
        d = t.diag[i] - sigma - (i == 0 ? 0.0 : o2 / d);
        if (d == 0.0) d = -1e-300;
        if (d < 0) ++count;
    }
    return count;
}

inline std::vector<double> tridiagonal_solve(const Tridiagonal& t, double shift, std::vector<double> rhs) {
    const std::size_t n = t.diag.size();
    std::vector<double> c(n, 0.0), d(n);
    double m = t.diag[0] - shift;
    for (std::size_t i = 0; i < n; ++i) {
        if (i > 0) m = t.diag[i] - shift - t.off[i - 1] * c[i - 1];
        if (std::abs(m) < 1e-300) m = 1e-300;
        if (i + 1 < n) c[i] = t.off[i] / m;
        d[i] = (rhs[i] - (i > 0 ? t.off[i - 1] * d[i - 1] : 0.0)) / m;
    }
    for (std::size_t i = n - 1; i-- > 0;) d[i] -= c[i] * d[i + 1];
    return d;
}

}  // namespace detail

struct FiniteDifferenceSpectrum {
    std::vector<double> x;
    std::vector<BoundState> states;
    double half_length = 0.0, spacing = 0.0;
};

/// Bound states of the three-point discretization of h on [-L, L] with
/// Dirichlet ends; energies by bisection, vectors by inverse iteration.
inline FiniteDifferenceSpectrum finite_difference_bound_states(const PotentialSpec& V,
                                                               FiniteDifferenceOptions o = {}) {
    if (o.spacing <= 0) o.spacing = std::min(0.01, 0.02 * V.core_scale());
    if (o.half_length <= 0) {
        double floor_rate = 1.0;
        if (V.kind() == PotentialSpec::Kind::poschl_teller)
            floor_rate = std::min(1.0, V.nu() * BoundState::poschl_teller(V.nu(), 1).exponent);
        o.half_length = V.decay_radius() + 40.0 / floor_rate;
    }
    const double h = o.spacing;
    const int half = static_cast<int>(std::ceil(o.half_length / h));
    FiniteDifferenceSpectrum out;
    out.half_length = half * h;
    out.spacing = h;
    detail::Tridiagonal t;
    for (int i = -half + 1; i <= half - 1; ++i) {
        const double x = i * h;
        out.x.push_back(x);
        t.diag.push_back(2 / (h * h) + V.value(x) + (i == 0 ? V.delta_strength() / h : 0.0));
    }
    t.off.assign(t.diag.size() - 1, -1 / (h * h));
    const int negative = detail::sturm_count(t, -o.tolerance);
    double lower = 0.0;
    for (double d : t.diag) lower = std::min(lower, d - 4 / (h * h));
    for (int k = 0; k < negative; ++k) {
        double lo = lower, hi = -o.tolerance;
        while (hi - lo > 1e-14 * std::max(1.0, std::abs(lo))) {
            const double mid = 0.5 * (lo + hi);
            (detail::sturm_count(t, mid) > k ? hi : lo) = mid;
        }
        const double mu = 0.5 * (lo + hi);
        std::vector<double> u(t.diag.size());
        for (std::size_t i = 0; i < u.size(); ++i) u[i] = std::exp(-0.01 * std::abs(out.x[i])) * (1 + 0.37 * out.x[i]);
        for (int it = 0; it < 4; ++it) {
            u = detail::tridiagonal_solve(t, mu * (1 + 1e-12) + 1e-14, u);
            double n = 0;
            for (double v : u) n += v * v * h;
            for (double& v : u) v /= std::sqrt(n);
        }
        const std::size_t mid = u.size() / 2;
        std::size_t probe = mid;
        while (probe + 1 < u.size() && std::abs(u[probe]) < 1e-6) ++probe;
        if (u[probe] < 0) for (double& v : u) v = -v;
        auto xs = out.x;
        xs.insert(xs.begin(), -out.half_length);
        xs.push_back(out.half_length);
        u.insert(u.begin(), 0.0);
        u.push_back(0.0);
        out.states.push_back(BoundState::grid(k + 1, mu, std::move(xs), std::move(u)));
    }
    return out;
}

/// Closed forms where they exist, the finite-difference states otherwise.
inline std::vector<BoundState> bound_states(const PotentialSpec& V) {
    switch (V.kind()) {
        case PotentialSpec::Kind::poschl_teller: return poschl_teller_spectrum(V.nu());
        case PotentialSpec::Kind::delta_limit: return {delta_limit_bound_state()};
        case PotentialSpec::Kind::free: return {};
        default: return finite_difference_bound_states(V).states;
    }
}

// ---------------------------------------------------------------------------
// delta-limit kernels

/// Resolvent kernel of -d^2 - delta(x) at z = k^2, Im k >= 0:
///   free(x, x')  = (i / 2k) e^{ik|x - x'|}
///   point(x, x') = -1 / (2k (2k - i)) e^{ik(|x| + |x'|)}
/// The point part has its pole at k = i/2 (z = -1/4) with residue phi(x) phi(x').
struct DeltaKernel {
    cplx zeta, k;

    cplx free(double x, double xp) const { return cplx(0, 1) / (2.0 * k) * std::exp(cplx(0, 1) * k * std::abs(x - xp)); }
    cplx point(double x, double xp) const {
        return -1.0 / (2.0 * k * (2.0 * k - cplx(0, 1))) * std::exp(cplx(0, 1) * k * (std::abs(x) + std::abs(xp)));
    }

    struct Forms {
        cplx free, point;
        cplx total() const { return free + point; }
    };

    /// <v, K v> for both parts by panel Gauss–Legendre; the double integral
    /// of the free part runs through a cumulative recurrence so that every
    /// exponential stays bounded.
    Forms forms(const LineFunction& v) const {
        const double R = detail::support_radius(v, 1e-15);
        if (R == 0.0) return {0.0, 0.0};
        std::vector<double> br = v.kinks;
        br.push_back(0.0);
        const double width = std::min(0.5, 1.0 / std::max(std::abs(k), 1e-3));
        const auto edges = panel_edges(-R, R, br, width);
        const auto& gl = gauss_legendre<20>();
        const cplx ik = cplx(0, 1) * k;
        auto partial = [&](double a, double b, double at) {  // int_a^b v(x') e^{ik(at - x')} dx'
            cplx s = 0.0;
            const double c = 0.5 * (a + b), h = 0.5 * (b - a);
            for (std::size_t q = 0; q < gl.nodes.size(); ++q) {
                const double xp = c + h * gl.nodes[q];
                s += gl.weights[q] * h * v(xp) * std::exp(ik * (at - xp));
            }
            return s;
        };
        cplx carry = 0.0, twice_free = 0.0, moment = 0.0;
        for (std::size_t p = 0; p + 1 < edges.size(); ++p) {
            const double a = edges[p], b = edges[p + 1];
            const double c = 0.5 * (a + b), h = 0.5 * (b - a);
            for (std::size_t q = 0; q < gl.nodes.size(); ++q) {
                const double x = c + h * gl.nodes[q];
                const double vx = v(x);
                const cplx inner = std::exp(ik * (x - a)) * carry + partial(a, x, x);
                twice_free += gl.weights[q] * h * vx * inner;
                moment += gl.weights[q] * h * vx * std::exp(ik * std::abs(x));
            }
            carry = std::exp(ik * (b - a)) * carry + partial(a, b, b);
        }
        return {cplx(0, 1) / (2.0 * k) * 2.0 * twice_free, -moment * moment / (2.0 * k * (2.0 * k - cplx(0, 1)))};
    }
};

/// Kernel at an off-axis z, or on [0, inf) with an explicit side.
inline DeltaKernel delta_resolvent_kernel(cplx zeta, std::optional<Side> side = std::nullopt) {
    require(std::isfinite(zeta.real()) && std::isfinite(zeta.imag()), "zeta must be finite");
    const bool on_cut = zeta.imag() == 0.0 && zeta.real() >= 0.0;
    if (on_cut && !side) throw invalid_input("zeta on the branch cut [0, inf) needs a side (+i0 or -i0)");
    cplx k;
    if (on_cut) {
        k = side_sign(*side) * std::sqrt(zeta.real());
        if (zeta.real() == 0.0) throw invalid_input("zeta = 0 is the threshold of the kernel");
    } else {
        k = std::sqrt(zeta);
        if (k.imag() < 0) k = -k;
    }
    return {zeta, k};
}

// ---------------------------------------------------------------------------
// resolvent boundary values

enum class ResolventEngine { exterior_scaling, rho_extrapolation, delta_kernel };

inline std::string engine_name(ResolventEngine e) {
    switch (e) {
        case ResolventEngine::exterior_scaling: return "exterior_scaling";
        case ResolventEngine::rho_extrapolation: return "rho_extrapolation";
        default: return "delta_kernel";
    }
}

struct ResolventOptions {
    ResolventEngine engine = ResolventEngine::exterior_scaling;
    double theta = 0.35;           // exterior scaling angle
    double radius_factor = 8.0;    // scaling radius in decay lengths of v
    double base_padding = 40.0;    // scaled layer length
    double max_spacing = 0.01;
    double deflation_window = 1e-6;
    std::vector<double> rhos{1e-2, 1e-3, 1e-4};
    bool richardson = true;
};

struct ResolventBoundaryValue {
    double lambda = 0.0;
    Side side = Side::plus;
    cplx value;
    bool reduced = false;
    bool deflated = false;  // an eigenprojection was actually removed
    ResolventEngine engine = ResolventEngine::exterior_scaling;
};

namespace detail {

/// Lumped-mass linear finite elements for h on a (possibly complex-scaled)
/// line grid. Dirichlet ends, or exact discrete transparent ends on a real grid.
class LineSystem {
public:
    using SpMat = Eigen::SparseMatrix<cplx>;

    LineSystem(const PotentialSpec& V, const LineFunction& v, std::vector<double> x, double radius, double theta,
               bool transparent)
        : x_(std::move(x)), transparent_(transparent) {
        z_ = exterior_scaled(x_, radius, theta);
        w_ = contour_weights(z_);
        pot_.resize(x_.size());
        rhs_.resize(x_.size());
        for (std::size_t i = 0; i < x_.size(); ++i) {
            const bool inside = std::abs(x_[i]) <= radius;
            pot_[i] = inside ? V.value(x_[i]) : 0.0;
            rhs_[i] = inside ? v(x_[i]) : 0.0;
            if (x_[i] == 0.0) origin_ = i;
        }
        delta_ = V.delta_strength();
        lo_ = transparent ? 0 : 1;
        hi_ = transparent ? x_.size() - 1 : x_.size() - 2;
        end_h_ = x_[1] - x_[0];
    }

    std::size_t size() const { return hi_ - lo_ + 1; }

    SpMat matrix(cplx zeta, Side side) const {
        std::vector<Eigen::Triplet<cplx>> trips;
        trips.reserve(3 * size() + 4);
        for (std::size_t i = lo_; i <= hi_; ++i) {
            cplx d = w_[i] * (pot_[i] - zeta);
            if (i == origin_) d += delta_;
            if (i > 0) d += 1.0 / (z_[i] - z_[i - 1]);
            if (i + 1 < z_.size()) d += 1.0 / (z_[i + 1] - z_[i]);
            if (transparent_ && (i == lo_ || i == hi_)) d += boundary_term(zeta, side);
            trips.emplace_back(i - lo_, i - lo_, d);
            if (i + 1 <= hi_) {
                const cplx o = -1.0 / (z_[i + 1] - z_[i]);
                trips.emplace_back(i - lo_, i + 1 - lo_, o);
                trips.emplace_back(i + 1 - lo_, i - lo_, o);
            }
        }
        SpMat A(size(), size());
        A.setFromTriplets(trips.begin(), trips.end());
        return A;
    }

    Eigen::VectorXcd weights() const {
        Eigen::VectorXcd w(size());
        for (std::size_t i = lo_; i <= hi_; ++i) w[i - lo_] = w_[i];
        if (transparent_) w[0] = w[size() - 1] = end_h_;
        return w;
    }

    Eigen::VectorXcd load() const {
        Eigen::VectorXcd b(size());
        for (std::size_t i = lo_; i <= hi_; ++i) b[i - lo_] = w_[i] * rhs_[i];
        return b;
    }

    /// b^T A(zeta)^{-1} b.
    cplx form(cplx zeta, Side side) const {
        const Eigen::VectorXcd b = load();
        return bilinear(b, solve(matrix(zeta, side), b));
    }

    /// Same with the eigenprojection onto the discrete state nearest to `mu`
    /// removed: b~ = (1 - P)^T b, form = b~^T A^{-1} b~. The near-null
    /// direction of A is W-orthogonal to b~, so it drops out of the form.
    cplx reduced_form(cplx zeta, Side side, double mu) const {
        const Eigen::VectorXcd b = load(), w = weights();
        Eigen::VectorXcd phi(size());
        for (Eigen::Index i = 0; i < phi.size(); ++i) {
            const double xi = x_[static_cast<std::size_t>(i) + lo_];
            phi[i] = std::exp(-0.05 * std::abs(xi)) * (1.0 + 0.37 * xi);
        }
        Eigen::SparseLU<SpMat> lu(matrix(mu, side));
        if (lu.info() != Eigen::Success) throw numeric_failure("factorization failed during deflation");
        for (int it = 0; it < 5; ++it) {
            phi = lu.solve(w.cwiseProduct(phi)).eval();
            phi /= std::sqrt(bilinear(phi, w.cwiseProduct(phi)));
        }
        const Eigen::VectorXcd wphi = w.cwiseProduct(phi);
        const Eigen::VectorXcd bt = b - wphi * (bilinear(phi, b) / bilinear(phi, wphi));
        return bilinear(bt, solve(matrix(zeta, side), bt));
    }

private:
    static cplx bilinear(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b) { return (a.array() * b.array()).sum(); }

    static Eigen::VectorXcd solve(const SpMat& A, const Eigen::VectorXcd& b) {
        Eigen::SparseLU<SpMat> lu;
        lu.compute(A);
        if (lu.info() != Eigen::Success) throw numeric_failure("sparse LU failed in the resolvent solve");
        Eigen::VectorXcd u = lu.solve(b);
        if (!u.allFinite()) throw numeric_failure("resolvent solve produced non-finite values");
        return u;
    }

    /// (1 - q)/h - (h/2) zeta with q = e^{i k_h h} the decaying (or, on the
    /// band, outgoing) root of q + 1/q = 2 - zeta h^2.
    cplx boundary_term(cplx zeta, Side side) const {
        const double h = end_h_;
        const cplx c = 2.0 - zeta * h * h;
        const cplx s = std::sqrt(c * c - 4.0);
        cplx q1 = 0.5 * (c + s), q2 = 0.5 * (c - s);
        cplx q = std::abs(q1) < std::abs(q2) ? q1 : q2;
        if (std::abs(std::abs(q1) - 1.0) < 1e-13 && std::abs(std::abs(q2) - 1.0) < 1e-13)
            q = (q1.imag() * side_sign(side) > 0) ? q1 : q2;
        return (1.0 - q) / h - 0.5 * h * zeta;
    }

    std::vector<double> x_, pot_, rhs_;
    std::vector<cplx> z_, w_;
    std::size_t origin_ = static_cast<std::size_t>(-1), lo_ = 1, hi_ = 0;
    double delta_ = 0.0, end_h_ = 0.0;
    bool transparent_ = false;
};

struct LineLayout {
    double radius;   // scaling radius X
    double length;   // half-length L
    double far, core;
};

inline LineLayout line_layout(const PotentialSpec& V, const LineFunction& v, cplx zeta, double theta,
                              const ResolventOptions& o) {
    LineLayout g;
    g.radius = std::max({o.radius_factor * v.decay_length, detail::support_radius(v), V.decay_radius(), 1.0});
    cplx k = std::sqrt(zeta);
    if (k.imag() < 0) k = -k;
    const double absk = std::max(std::abs(k), 1e-8);
    // e^{ik(X + s e^{i theta})} must decay by e^{-25} across the scaled layer
    const double attenuation = std::max(std::abs(std::imag(absk * std::polar(1.0, std::abs(theta)))), 1e-6);
    g.length = g.radius + std::min(std::max(o.base_padding, 25.0 / attenuation), 2000.0);
    g.far = std::min(o.max_spacing, 0.1 / absk);
    g.core = std::min(g.far, 0.02 * V.core_scale());
    return g;
}

inline std::vector<double> layout_grid(const LineLayout& g, double length, int refine) {
    LineGridOptions go;
    go.half_length = length;
    go.far_spacing = g.far;
    go.core_spacing = g.core;
    go.refine = refine;
    return make_line_grid(go);
}

/// Neville extrapolation of samples f(rho_i) to rho = 0.
inline cplx extrapolate_to_zero(const std::vector<double>& rho, std::vector<cplx> f) {
    const std::size_t n = rho.size();
    for (std::size_t m = 1; m < n; ++m)
        for (std::size_t i = 0; i + m < n; ++i)
            f[i] = (rho[i + m] * f[i] - rho[i] * f[i + 1]) / (rho[i + m] - rho[i]);
    return f[0];
}

/// Eigenvalue of h closest to lambda within the deflation window, if any.
inline std::optional<double> nearby_eigenvalue(const PotentialSpec& V, double lambda, double window) {
    if (lambda >= 0) return std::nullopt;
    for (const auto& b : bound_states(V))
        if (std::abs(lambda - b.energy) < window) return b.energy;
    return std::nullopt;
}

}  // namespace detail

/// <v, r(zeta) v> for zeta off the real axis (or below the spectrum), by
/// exterior scaling with the rotation on the side of Im zeta.
inline cplx resolvent_form_at(const PotentialSpec& V, cplx zeta, const LineFunction& v, ResolventOptions o = {}) {
    const Side side = zeta.imag() >= 0 ? Side::plus : Side::minus;
    const double theta = side_sign(side) * std::abs(o.theta);
    const auto g = detail::line_layout(V, v, zeta, theta, o);
    auto at = [&](int refine) {
        return detail::LineSystem(V, v, detail::layout_grid(g, g.length, refine), g.radius, theta, false).form(zeta, side);
    };
    return o.richardson ? richardson(at(1), at(2)) : at(1);
}

/// Boundary value <v, r(lambda ± i0) v>. With `reduced`, the eigenprojection
/// of an eigenvalue within the deflation window of lambda is removed.
inline ResolventBoundaryValue resolvent_form(const PotentialSpec& V, double lambda, Side side, const LineFunction& v,
                                             bool reduced = false, ResolventOptions o = {}) {
    require(std::isfinite(lambda), "lambda must be finite");
    require(static_cast<bool>(v.f), "test function is empty");
    ResolventBoundaryValue out;
    out.lambda = lambda;
    out.side = side;
    out.reduced = reduced;
    out.engine = o.engine;
    const auto mu = detail::nearby_eigenvalue(V, lambda, o.deflation_window);
    if (mu && !reduced)
        throw numeric_failure("lambda = " + std::to_string(lambda) + " sits on the eigenvalue " + std::to_string(*mu) +
                              " of h; request the reduced resolvent");
    out.deflated = mu.has_value();
    const double sgn = side_sign(side);

    switch (o.engine) {
        case ResolventEngine::exterior_scaling: {
            const double theta = sgn * std::abs(o.theta);
            const auto g = detail::line_layout(V, v, lambda, theta, o);
            auto at = [&](int refine) {
                detail::LineSystem sys(V, v, detail::layout_grid(g, g.length, refine), g.radius, theta, false);
                return mu ? sys.reduced_form(lambda, side, *mu) : sys.form(lambda, side);
            };
            out.value = o.richardson ? richardson(at(1), at(2)) : at(1);
            break;
        }
        case ResolventEngine::rho_extrapolation: {
            require(o.rhos.size() >= 2, "rho extrapolation needs at least two rho values");
            const auto g = detail::line_layout(V, v, lambda, 0.0, o);
            // a deflated state must have decayed before the transparent ends
            const double length = mu ? std::max(g.radius + 1.0, 40.0 / std::sqrt(-*mu)) : g.radius + 1.0;
            std::vector<detail::LineSystem> systems;
            for (int refine : {1, 2})
                systems.emplace_back(V, v, detail::layout_grid(g, length, refine), g.radius, 0.0, true);
            std::vector<cplx> f;
            for (double rho : o.rhos) {
                const cplx zeta(lambda, sgn * rho);
                auto at = [&](const detail::LineSystem& s) {
                    return mu ? s.reduced_form(zeta, side, *mu) : s.form(zeta, side);
                };
                f.push_back(o.richardson ? richardson(at(systems[0]), at(systems[1])) : at(systems[0]));
            }
            out.value = detail::extrapolate_to_zero(o.rhos, f);
            break;
        }
        case ResolventEngine::delta_kernel: {
            if (V.kind() != PotentialSpec::Kind::delta_limit && V.kind() != PotentialSpec::Kind::free)
                throw invalid_input("the delta-kernel engine needs the delta_limit or free potential");
            const bool point = V.kind() == PotentialSpec::Kind::delta_limit;
            auto form = [&](double at) {
                const auto f = delta_resolvent_kernel(at, side).forms(v);
                return point ? f.total() : f.free;
            };
            if (!mu) {
                out.value = form(lambda);
                break;
            }
            // symmetric average cancels the pole exactly; subtract what is left of it
            constexpr double d = 1e-3;
            const double pv = integrate([&](double x) { return v(x) * delta_limit_bound_state().value(x); },
                                        -detail::support_radius(v), detail::support_radius(v), {0.0}, 0.5);
            const double pole = 0.5 * pv * pv * (1 / (*mu - lambda - d) + 1 / (*mu - lambda + d));
            out.value = 0.5 * (form(lambda + d) + form(lambda - d)) - pole;
            break;
        }
    }
    if (!std::isfinite(out.value.real()) || !std::isfinite(out.value.imag()))
        throw numeric_failure("resolvent form is not finite");
    return out;
}

// ---------------------------------------------------------------------------
// Assumption A and the nu -> inf probe

struct AssumptionAReport {
    double integral = 0.0;           // int V dx
    double weighted_integral = 0.0;  // int (1 + x^2)|V| dx
    std::optional<double> exact_integral, exact_weighted_integral;
    bool finite = true, sign_ok = true;
    bool passes() const { return finite && sign_ok; }
};

inline AssumptionAReport validate_assumption_A(const PotentialSpec& V) {
    AssumptionAReport r;
    switch (V.kind()) {
        case PotentialSpec::Kind::poschl_teller: {
            const double nu = V.nu(), R = V.decay_radius();
            std::vector<double> br;
            for (double q : {0.0, 1.0, 4.0, 16.0}) br.push_back(q / nu), br.push_back(-q / nu);
            r.integral = integrate([&](double x) { return V.value(x); }, -R, R, br, 2.0 / nu);
            r.weighted_integral = integrate([&](double x) { return (1 + x * x) * std::abs(V.value(x)); }, -R, R, br, 2.0 / nu);
            r.exact_integral = -1.0;
            r.exact_weighted_integral = 1.0 + M_PI * M_PI / (12 * nu * nu);
            break;
        }
        case PotentialSpec::Kind::delta_limit:
            r.exact_integral = -1.0;
            r.exact_weighted_integral = 1.0;
            r.integral = -1.0;
            r.weighted_integral = 1.0;
            break;
        case PotentialSpec::Kind::free:
            r.exact_integral = r.exact_weighted_integral = 0.0;
            break;
        case PotentialSpec::Kind::sampled: {
            const auto& x = V.sample_x();
            const auto& v = V.sample_values();
            for (std::size_t i = 0; i + 1 < x.size(); ++i) {
                // exact for the piecewise-linear interpolant clipped to the decay radius
                const double a = std::max(x[i], -V.decay_radius()), b = std::min(x[i + 1], V.decay_radius());
                if (b <= a) continue;
                const auto& g = gauss_legendre<20>();
                for (std::size_t q = 0; q < g.nodes.size(); ++q) {
                    const double xq = 0.5 * (a + b) + 0.5 * (b - a) * g.nodes[q];
                    const double vq = V.value(xq);
                    r.integral += 0.5 * (b - a) * g.weights[q] * vq;
                    r.weighted_integral += 0.5 * (b - a) * g.weights[q] * (1 + xq * xq) * std::abs(vq);
                }
            }
            break;
        }
    }
    r.finite = std::isfinite(r.integral) && std::isfinite(r.weighted_integral);
    r.sign_ok = r.integral <= 1e-12;
    return r;
}

struct ConvergenceRow {
    double nu;
    cplx value, limit;
    double difference;
};

/// <v, r_nu(zeta) v> against the delta-limit kernel form for each nu.
inline std::vector<ConvergenceRow> resolvent_convergence_probe(const std::vector<double>& nus, cplx zeta,
                                                               const LineFunction& v, ResolventOptions o = {}) {
    require(zeta.imag() != 0.0 || zeta.real() < 0.0, "the probe needs zeta off [0, inf)");
    const cplx limit = delta_resolvent_kernel(zeta).forms(v).total();
    std::vector<ConvergenceRow> rows;
    for (double nu : nus) {
        const cplx val = resolvent_form_at(PotentialSpec::poschl_teller(nu), zeta, v, o);
        rows.push_back({nu, val, limit, std::abs(val - limit)});
    }
    return rows;
}

}  // namespace twistres
