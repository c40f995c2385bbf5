#pragma once

// Resonances of the twisted waveguide by channel expansion: psi = sum_k u_k(x) chi_k,
// each u_k discretized with lumped linear elements on a line grid that is
// exterior-scaled beyond the support of the twist and the potential. The
// channel operator
//     (-d_x^2 + E_n + V) u_n - eps sum_k T1[n][k] (d_x a' + a' d_x) u_k
//                            - eps^2 a'^2 sum_k T2[n][k] u_k
// becomes a complex-symmetric pencil A u = E W u with W diagonal.

#include <algorithm>
#include <cmath>
#include <complex>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "twistres/cross_section.hpp"
#include "twistres/errors.hpp"
#include "twistres/line_grid.hpp"
#include "twistres/longitudinal.hpp"
#include "twistres/twist.hpp"

namespace twistres {

struct ScalingParams {
    double im_theta = 0.3;
    double theta_max = 0.6;

    void validate() const {
        require(theta_max > 0 && theta_max < M_PI / 4, "theta_max must lie in (0, pi/4)");
        require(im_theta >= 0 && im_theta <= theta_max,
                "Im theta = " + std::to_string(im_theta) + " outside [0, theta_max = " + std::to_string(theta_max) + "]");
    }
};

struct Ray {
    cplx origin, direction;  // origin + t direction, t >= 0
};

/// E_k + t e^{-2i Im theta}, t >= 0, one per threshold.
inline std::vector<Ray> essential_rays(double im_theta, const std::vector<double>& thresholds) {
    std::vector<Ray> rays;
    for (double e : thresholds) rays.push_back({e, std::polar(1.0, -2 * im_theta)});
    return rays;
}

inline double distance_to_rays(cplx z, const std::vector<Ray>& rays) {
    double best = INFINITY;
    for (const auto& r : rays) {
        const double t = std::max(0.0, std::real((z - r.origin) * std::conj(r.direction)));
        best = std::min(best, std::abs(z - (r.origin + t * r.direction)));
    }
    return best;
}

struct ChannelGridSpec {
    double far_spacing = 0.02;
    double core_spacing = 0.0;    // 0: min(far, 0.02 * core scale of V)
    double scaling_radius = 0.0;  // 0: just beyond the twist and potential supports
    double layer_length = 0.0;    // 0: from reference_energy
    double reference_energy = std::nan("");
    double growth = 0.02;
};

class ChannelSystem {
public:
    using SpMat = Eigen::SparseMatrix<cplx>;

    int K = 0;
    double eps = 0.0;
    ScalingParams scaling;
    std::vector<double> thresholds;
    std::vector<double> x;  // unknown nodes (real parameter)
    std::vector<cplx> z;    // their positions on the contour
    double scaling_radius = 0.0, layer_length = 0.0;
    SpMat A;
    Eigen::VectorXcd W;

    Eigen::Index size() const { return A.rows(); }
    Eigen::Index nodes() const { return static_cast<Eigen::Index>(x.size()); }
    Eigen::Index index(Eigen::Index node, int k) const { return node * K + k; }

    /// Channel k (0-based) of a stacked vector.
    Eigen::VectorXcd channel(const Eigen::VectorXcd& u, int k) const {
        Eigen::VectorXcd c(nodes());
        for (Eigen::Index i = 0; i < nodes(); ++i) c[i] = u[index(i, k)];
        return c;
    }

    /// Largest entry coupling two different channels.
    double max_coupling() const {
        double m = 0.0;
        for (int c = 0; c < A.outerSize(); ++c)
            for (SpMat::InnerIterator it(A, c); it; ++it)
                if (it.row() % K != it.col() % K) m = std::max(m, std::abs(it.value()));
        return m;
    }
};

namespace detail {

inline double contour_rate(const TwistProfile& twist, double x, double radius) {
    if (std::abs(x) <= radius) return twist.rate(x);
    return twist.kind() == TwistProfile::Kind::linear ? 1.0 : 0.0;
}

/// Scaled layer long enough that every channel decays by e^{-23} across it.
inline double auto_layer(double E, const std::vector<double>& thresholds, double theta) {
    double layer = 10.0;
    for (double ek : thresholds) {
        const double d = E - ek;
        if (std::abs(d) < 1e-3) continue;
        const double rate = d > 0 ? std::sqrt(d) * std::sin(theta) : std::sqrt(-d) * std::cos(theta);
        if (rate > 0) layer = std::max(layer, 23.0 / rate);
    }
    return std::min(layer, 400.0);
}

}  // namespace detail

/// Sparse channel system at twist strength eps.
inline ChannelSystem assemble(double eps, const ScalingParams& scaling, const PotentialSpec& V, const TwistProfile& twist,
                              const TransverseModeSet& modes, const CouplingMatrices& coupling, int K,
                              ChannelGridSpec grid) {
    scaling.validate();
    require(std::isfinite(eps), "eps must be finite");
    require(K >= 1, "need at least one channel");
    require(K <= static_cast<int>(modes.size()) && K <= coupling.K,
            "K = " + std::to_string(K) + " exceeds the " + std::to_string(std::min<int>(modes.size(), coupling.K)) +
                " available modes");
    require(grid.far_spacing > 0, "far spacing must be positive");
    if (grid.core_spacing <= 0) grid.core_spacing = std::min(grid.far_spacing, 0.02 * V.core_scale());
    const double support = twist.kind() == TwistProfile::Kind::linear ? 0.0 : twist.support_radius();
    const double needed = std::max({support, V.decay_radius(), 1.0});
    if (grid.scaling_radius <= 0) grid.scaling_radius = needed + 2.0;
    require(grid.scaling_radius >= needed, "scaling radius must enclose the twist and potential supports");

    ChannelSystem s;
    s.K = K;
    s.eps = eps;
    s.scaling = scaling;
    s.thresholds = modes.energies();
    s.thresholds.resize(static_cast<std::size_t>(K));
    if (grid.layer_length <= 0) {
        require(std::isfinite(grid.reference_energy), "automatic layer length needs a reference energy");
        grid.layer_length = scaling.im_theta > 0 ? detail::auto_layer(grid.reference_energy, s.thresholds, scaling.im_theta)
                                                 : 10.0;
    }
    if (std::isfinite(grid.reference_energy)) {
        const double kmax = std::sqrt(std::max(1.0, grid.reference_energy - s.thresholds.front()));
        require(grid.far_spacing * kmax <= 0.5, "grid too coarse: far spacing " + std::to_string(grid.far_spacing) +
                                                    " does not resolve k = " + std::to_string(kmax));
    }
    s.scaling_radius = grid.scaling_radius;
    s.layer_length = grid.layer_length;

    LineGridOptions go;
    go.half_length = grid.scaling_radius + grid.layer_length;
    go.far_spacing = grid.far_spacing;
    go.core_spacing = grid.core_spacing;
    go.growth = grid.growth;
    const auto all_x = make_line_grid(go);
    const auto all_z = exterior_scaled(all_x, grid.scaling_radius, scaling.im_theta);
    const auto all_w = contour_weights(all_z);
    const std::size_t M = all_x.size();
    const Eigen::Index N = static_cast<Eigen::Index>(M - 2);
    s.x.assign(all_x.begin() + 1, all_x.end() - 1);
    s.z.assign(all_z.begin() + 1, all_z.end() - 1);
    s.W.resize(N * K);

    std::vector<double> rate(M);
    for (std::size_t i = 0; i < M; ++i) rate[i] = detail::contour_rate(twist, all_x[i], grid.scaling_radius);

    std::vector<Eigen::Triplet<cplx>> trips;
    trips.reserve(static_cast<std::size_t>(N) * K * (2 * K + 3));
    auto unknown = [&](std::size_t i) { return i >= 1 && i + 1 < M; };
    auto idx = [&](std::size_t i, int k) { return static_cast<Eigen::Index>(i - 1) * K + k; };

    for (std::size_t i = 1; i + 1 < M; ++i) {
        const cplx w = all_w[i];
        const double vi = std::abs(all_x[i]) <= grid.scaling_radius ? V.value(all_x[i]) : 0.0;
        const cplx stiff = 1.0 / (all_z[i] - all_z[i - 1]) + 1.0 / (all_z[i + 1] - all_z[i]);
        for (int n = 0; n < K; ++n) {
            s.W[idx(i, n)] = w;
            cplx d = stiff + w * (s.thresholds[static_cast<std::size_t>(n)] + vi);
            if (all_x[i] == 0.0) d += V.delta_strength();
            trips.emplace_back(idx(i, n), idx(i, n), d);
            if (eps != 0.0 && rate[i] != 0.0)
                for (int k = 0; k < K; ++k) {
                    const double t2 = coupling.T2(n, k);
                    if (t2 != 0.0) trips.emplace_back(idx(i, n), idx(i, k), -eps * eps * w * rate[i] * rate[i] * t2);
                }
        }
    }
    for (std::size_t i = 0; i + 1 < M; ++i) {
        const bool a = unknown(i), b = unknown(i + 1);
        const cplx off = -1.0 / (all_z[i + 1] - all_z[i]);
        if (a && b)
            for (int n = 0; n < K; ++n) {
                trips.emplace_back(idx(i, n), idx(i + 1, n), off);
                trips.emplace_back(idx(i + 1, n), idx(i, n), off);
            }
        // -eps T1[n][k] int a' (w_n u_k' - w_n' u_k) on the edge
        const double mean_rate = 0.5 * (rate[i] + rate[i + 1]);
        if (eps == 0.0 || mean_rate == 0.0 || !(a && b)) continue;
        for (int n = 0; n < K; ++n)
            for (int k = 0; k < K; ++k) {
                const double t1 = coupling.T1(n, k);
                if (t1 == 0.0) continue;
                trips.emplace_back(idx(i, n), idx(i + 1, k), -eps * t1 * mean_rate);
                trips.emplace_back(idx(i + 1, n), idx(i, k), eps * t1 * mean_rate);
            }
    }
    s.A.resize(N * K, N * K);
    s.A.setFromTriplets(trips.begin(), trips.end());
    s.A.makeCompressed();
    return s;
}

struct ComplexEigenpair {
    cplx value;
    Eigen::VectorXcd vector;
    double residual = 0.0;
    int iterations = 0;
};

struct LocateOptions {
    int block = 6;
    int max_iterations = 300;
    double tolerance = 1e-11;  // stop when the selected pair reaches this
    double accept = 1e-8;      // fail above this
    unsigned seed = 0x5ca1e;
    Eigen::VectorXcd warm_start;
};

namespace detail {

inline double inf_norm(const ChannelSystem::SpMat& A) {
    Eigen::VectorXd rows = Eigen::VectorXd::Zero(A.rows());
    for (int c = 0; c < A.outerSize(); ++c)
        for (ChannelSystem::SpMat::InnerIterator it(A, c); it; ++it) rows[it.row()] += std::abs(it.value());
    return rows.maxCoeff();
}

/// Normalized backward error ||A x - l W x|| / ((||A|| + |l| ||W||) ||x||).
inline double backward_error(const ChannelSystem& s, const Eigen::VectorXcd& v, cplx l, double normA) {
    const Eigen::VectorXcd r = s.A * v - l * s.W.cwiseProduct(v);
    return r.norm() / ((normA + std::abs(l) * s.W.cwiseAbs().maxCoeff()) * v.norm());
}

struct RitzBlock {
    std::vector<cplx> values;
    std::vector<Eigen::VectorXcd> vectors;
};

/// Shift-invert subspace iteration with Rayleigh–Ritz on the pencil (A, W).
template <class Select>
RitzBlock subspace_iteration(const ChannelSystem& s, cplx shift, int block, int iterations, const LocateOptions& o,
                             Select&& done) {
    const Eigen::Index n = s.size();
    ChannelSystem::SpMat B = s.A;
    for (Eigen::Index i = 0; i < n; ++i) B.coeffRef(i, i) -= shift * s.W[i];
    Eigen::SparseLU<ChannelSystem::SpMat> lu;
    lu.compute(B);
    if (lu.info() != Eigen::Success) throw numeric_failure("shift-invert factorization failed at " + std::to_string(shift.real()));
    std::mt19937_64 rng(o.seed);
    std::normal_distribution<double> g;
    Eigen::MatrixXcd V(n, block);
    for (Eigen::Index j = 0; j < block; ++j)
        for (Eigen::Index i = 0; i < n; ++i) V(i, j) = cplx(g(rng), g(rng));
    if (o.warm_start.size() == n) V.col(0) = o.warm_start;
    RitzBlock rb;
    for (int it = 0; it < iterations; ++it) {
        Eigen::MatrixXcd Y(n, block);
        for (Eigen::Index j = 0; j < block; ++j) Y.col(j) = lu.solve(s.W.cwiseProduct(V.col(j)));
        if (!Y.allFinite()) throw numeric_failure("shift-invert solve produced non-finite values");
        Eigen::HouseholderQR<Eigen::MatrixXcd> qr(Y);
        const Eigen::MatrixXcd Q = qr.householderQ() * Eigen::MatrixXcd::Identity(n, block);
        const Eigen::MatrixXcd G = Q.adjoint() * (s.A * Q);
        const Eigen::MatrixXcd M = Q.adjoint() * (s.W.asDiagonal() * Q);
        Eigen::ComplexEigenSolver<Eigen::MatrixXcd> ces(M.partialPivLu().solve(G));
        rb.values.assign(ces.eigenvalues().begin(), ces.eigenvalues().end());
        rb.vectors.clear();
        for (Eigen::Index j = 0; j < block; ++j) rb.vectors.push_back((Q * ces.eigenvectors().col(j)).normalized());
        if (done(rb, it + 1)) break;
        V = Q;
    }
    return rb;
}

}  // namespace detail

/// Eigenpair of the channel system inside the disk |E - target| <= radius,
/// closest to the target.
inline ComplexEigenpair locate_resonance(const ChannelSystem& s, cplx target, double radius, const LocateOptions& o = {}) {
    require(radius > 0, "search radius must be positive");
    const double normA = detail::inf_norm(s.A);
    ComplexEigenpair best;
    bool found = false;
    const int block = std::max(2, o.block);
    detail::subspace_iteration(s, target, block, o.max_iterations, o, [&](const detail::RitzBlock& rb, int it) {
        found = false;
        double dist = INFINITY;
        for (std::size_t j = 0; j < rb.values.size(); ++j) {
            const double d = std::abs(rb.values[j] - target);
            if (d <= radius && d < dist) {
                dist = d;
                best.value = rb.values[j];
                best.vector = rb.vectors[j];
                found = true;
            }
        }
        best.iterations = it;
        if (!found) return it >= 40;
        best.residual = detail::backward_error(s, best.vector, best.value, normA);
        return best.residual <= o.tolerance;
    });
    if (!found)
        throw numeric_failure("no eigenvalue within " + std::to_string(radius) + " of (" + std::to_string(target.real()) +
                              ", " + std::to_string(target.imag()) + ")");
    if (best.residual > o.accept)
        throw numeric_failure("eigenvalue iteration stagnated at residual " + std::to_string(best.residual));
    return best;
}

/// Ritz values near `center`, for spectrum plots.
inline std::vector<cplx> nearest_eigenvalues(const ChannelSystem& s, cplx center, int count, int iterations = 10) {
    require(count >= 1, "count must be positive");
    LocateOptions o;
    auto rb = detail::subspace_iteration(s, center, count + 4, iterations, o, [](const auto&, int) { return false; });
    auto values = rb.values;
    std::sort(values.begin(), values.end(), [&](cplx a, cplx b) { return std::abs(a - center) < std::abs(b - center); });
    values.resize(std::min<std::size_t>(values.size(), static_cast<std::size_t>(count)));
    return values;
}

/// All eigenvalues of a small system by a dense solve.
inline std::vector<cplx> dense_eigenvalues(const ChannelSystem& s) {
    require(s.size() <= 6000, "dense spectrum limited to 6000 unknowns");
    Eigen::MatrixXcd M = Eigen::MatrixXcd(s.A);
    for (Eigen::Index i = 0; i < M.rows(); ++i) M.row(i) /= s.W[i];
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> ces(M, false);
    return {ces.eigenvalues().begin(), ces.eigenvalues().end()};
}

/// Angle below the real axis of the discrete continuum of a box whose real
/// part has half-length R and whose scaled layer has length L; tends to
/// 2 Im theta as L / R grows.
inline double finite_layer_ray_angle(double R, double L, double im_theta) {
    return 2.0 * std::arg(cplx(R, 0.0) + std::polar(L, im_theta));
}

/// Largest distance from the rays among eigenvalues within `window` of a
/// threshold (dense solve; small systems only).
inline double ray_deviation(const ChannelSystem& s, double window) {
    const auto rays = essential_rays(s.scaling.im_theta, s.thresholds);
    double worst = 0.0;
    for (cplx e : dense_eigenvalues(s)) {
        bool near = false;
        for (double t : s.thresholds) near = near || std::abs(e - t) <= window;
        if (near) worst = std::max(worst, distance_to_rays(e, rays));
    }
    return worst;
}

// ---------------------------------------------------------------------------
// eps scan

struct ScanRow {
    double eps = 0.0;
    cplx E;
    double residual = 0.0;
};

struct ScanTable {
    std::vector<ScanRow> rows;
    cplx E0;                        // eps = 0 eigenvalue
    double a_fit = 0.0;             // Im E ~ -a eps^2, least squares through the origin
    double a_fit_stderr = 0.0;
    double a_cubic = 0.0;           // Im E ~ -a eps^2 + c eps^3
    double cubic_coefficient = 0.0;
    double cubic_residual = 0.0;    // |a_fit - a_cubic|
};

struct ScanSetup {
    PotentialSpec potential;
    BoundState state;
    TwistProfile twist = TwistProfile::compact(20.0);
    const TransverseModeSet* modes = nullptr;
    CouplingMatrices coupling;
    int K = 6;
    int n = 2;
    ScalingParams scaling;
    ChannelGridSpec grid;
    double radius = 0.15;
    LocateOptions locate;
};

inline void fit_scan(ScanTable& t) {
    double s4 = 0, sy = 0, s5 = 0, s6 = 0, s3y = 0;
    int count = 0;
    for (const auto& r : t.rows) {
        const double e2 = r.eps * r.eps, y = -r.E.imag();
        s4 += e2 * e2;
        sy += e2 * y;
        s5 += e2 * e2 * r.eps;
        s6 += e2 * e2 * e2;
        s3y += e2 * r.eps * y;
        if (r.eps != 0.0) ++count;
    }
    if (s4 == 0.0) return;
    t.a_fit = sy / s4;
    double rss = 0;
    for (const auto& r : t.rows) rss += std::pow(-r.E.imag() - t.a_fit * r.eps * r.eps, 2);
    t.a_fit_stderr = count > 1 ? std::sqrt(rss / (count - 1) / s4) : 0.0;
    const double det = s4 * s6 - s5 * s5;
    if (count >= 2 && std::abs(det) > 1e-300) {
        t.a_cubic = (sy * s6 - s5 * s3y) / det;
        t.cubic_coefficient = -(s4 * s3y - s5 * sy) / det;
        t.cubic_residual = std::abs(t.a_fit - t.a_cubic);
    }
}

/// Tracks the eigenvalue that starts at E_n + mu_j (eps = 0) through the
/// eps list, warm-starting each solve from the previous one.
inline ScanTable epsilon_scan(const std::vector<double>& eps_list, const ScanSetup& setup) {
    require(!eps_list.empty(), "epsilon list is empty");
    require(setup.modes != nullptr, "scan needs a mode set");
    for (double e : eps_list) require(std::isfinite(e) && e >= 0, "epsilon values must be finite and nonnegative");
    const double E_guess = (*setup.modes)[setup.n].energy + setup.state.energy;
    ChannelGridSpec grid = setup.grid;
    if (!std::isfinite(grid.reference_energy)) grid.reference_energy = E_guess;
    std::vector<double> order = eps_list;
    std::sort(order.begin(), order.end());
    order.erase(std::unique(order.begin(), order.end()), order.end());

    ScanTable t;
    auto solve = [&](double eps, cplx target, const Eigen::VectorXcd& warm) {
        const auto sys = assemble(eps, setup.scaling, setup.potential, setup.twist, *setup.modes, setup.coupling, setup.K, grid);
        LocateOptions o = setup.locate;
        o.warm_start = warm;
        return locate_resonance(sys, target, setup.radius, o);
    };
    auto start = solve(0.0, E_guess, {});
    t.E0 = start.value;
    cplx prev = start.value, prev2 = start.value;
    double prev_eps = 0.0, prev2_eps = 0.0;
    Eigen::VectorXcd warm = start.vector;
    for (double eps : order) {
        if (eps == 0.0) {
            t.rows.push_back({0.0, start.value, start.residual});
            continue;
        }
        // extrapolate along eps^2 from the last two points
        cplx target = prev;
        if (prev_eps > 0) target = prev + (prev - prev2) * (eps * eps - prev_eps * prev_eps) / (prev_eps * prev_eps - prev2_eps * prev2_eps);
        ComplexEigenpair p;
        try {
            p = solve(eps, target, warm);
        } catch (const numeric_failure& e) {
            throw numeric_failure("resonance lost at eps = " + std::to_string(eps) + ": " + e.what());
        }
        t.rows.push_back({eps, p.value, p.residual});
        prev2 = prev;
        prev2_eps = prev_eps;
        prev = p.value;
        prev_eps = eps;
        warm = p.vector;
    }
    fit_scan(t);
    return t;
}

}  // namespace twistres
