#pragma once

// Dirichlet modes of the waveguide cross-section, the rotation generator
// d_tau = (y - y0) d_z - (z - z0) d_y about the twist axis (y0, z0), and the
// mode coupling matrices
//
//     T1[n][k] = <chi_n, d_tau chi_k>,   T2[n][k] = <chi_n, d_tau^2 chi_k>.
//
// Placement: the rectangle occupies [0, a] x [-b, 0], so the default axis runs
// along the corner (0, 0); the disk is centred on the origin; polygons are used
// as given.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <boost/math/special_functions/bessel.hpp>
#include <boost/math/special_functions/bessel_prime.hpp>

#include "twistres/eigs.hpp"
#include "twistres/errors.hpp"
#include "twistres/quadrature.hpp"
#include "twistres/twist.hpp"

namespace twistres {

using Point2 = std::array<double, 2>;

struct Rectangle {
    double a = 0.0;  // extent along y
    double b = 0.0;  // extent along z
};
struct Disk {
    double radius = 0.0;
};
struct Polygon {
    std::vector<Point2> vertices;
};
using Shape = std::variant<Rectangle, Disk, Polygon>;

namespace detail {

inline double cross(const Point2& o, const Point2& a, const Point2& b) {
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
}

inline bool segments_intersect(const Point2& p1, const Point2& p2, const Point2& q1, const Point2& q2) {
    const double d1 = cross(q1, q2, p1), d2 = cross(q1, q2, p2);
    const double d3 = cross(p1, p2, q1), d4 = cross(p1, p2, q2);
    if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) return true;
    auto on_segment = [](const Point2& a, const Point2& b, const Point2& c) {
        return std::min(a[0], b[0]) <= c[0] && c[0] <= std::max(a[0], b[0]) && std::min(a[1], b[1]) <= c[1] &&
               c[1] <= std::max(a[1], b[1]);
    };
    return (d1 == 0 && on_segment(q1, q2, p1)) || (d2 == 0 && on_segment(q1, q2, p2)) ||
           (d3 == 0 && on_segment(p1, p2, q1)) || (d4 == 0 && on_segment(p1, p2, q2));
}

inline double polygon_area(const std::vector<Point2>& v) {
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const auto& p = v[i];
        const auto& q = v[(i + 1) % v.size()];
        s += p[0] * q[1] - q[0] * p[1];
    }
    return 0.5 * s;
}

// strict interior test; points on an edge are treated as outside
inline bool polygon_contains(const std::vector<Point2>& v, double y, double z) {
    bool in = false;
    for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) {
        const Point2 a = v[j], b = v[i];
        const double c = cross(a, b, {y, z});
        const double len = std::hypot(b[0] - a[0], b[1] - a[1]);
        if (std::abs(c) <= 1e-12 * len * len && std::min(a[0], b[0]) - 1e-14 <= y &&
            y <= std::max(a[0], b[0]) + 1e-14 && std::min(a[1], b[1]) - 1e-14 <= z &&
            z <= std::max(a[1], b[1]) + 1e-14)
            return false;
        if ((a[1] > z) != (b[1] > z) && y < (b[0] - a[0]) * (z - a[1]) / (b[1] - a[1]) + a[0]) in = !in;
    }
    return in;
}

}  // namespace detail

struct CrossSectionSpec {
    Shape shape;
    int grid_n = 64;       // intervals per axis of the finite-difference lattice
    Point2 axis{0.0, 0.0}; // where the twist axis pierces the (y, z) plane

    void validate() const {
        require(grid_n >= 16, "cross-section grid_n must be >= 16");
        std::visit(
            [](const auto& s) {
                using S = std::decay_t<decltype(s)>;
                if constexpr (std::is_same_v<S, Rectangle>) {
                    require(s.a > 0 && s.b > 0, "rectangle needs a > 0 and b > 0");
                } else if constexpr (std::is_same_v<S, Disk>) {
                    require(s.radius > 0, "disk needs R > 0");
                } else {
                    const auto& v = s.vertices;
                    require(v.size() >= 3, "polygon needs at least three vertices");
                    require(std::abs(detail::polygon_area(v)) > 1e-12, "polygon has zero area");
                    const std::size_t m = v.size();
                    for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = i + 1; j < m; ++j) {
                            if (j == i + 1 || (i == 0 && j == m - 1)) continue;
                            require(!detail::segments_intersect(v[i], v[(i + 1) % m], v[j], v[(j + 1) % m]),
                                    "polygon is self-intersecting");
                        }
                }
            },
            shape);
    }

    /// Bounding box {ymin, ymax, zmin, zmax}.
    [[nodiscard]] std::array<double, 4> bounds() const {
        return std::visit(
            [](const auto& s) -> std::array<double, 4> {
                using S = std::decay_t<decltype(s)>;
                if constexpr (std::is_same_v<S, Rectangle>) {
                    return {0.0, s.a, -s.b, 0.0};
                } else if constexpr (std::is_same_v<S, Disk>) {
                    return {-s.radius, s.radius, -s.radius, s.radius};
                } else {
                    std::array<double, 4> b{INFINITY, -INFINITY, INFINITY, -INFINITY};
                    for (const auto& p : s.vertices) {
                        b[0] = std::min(b[0], p[0]);
                        b[1] = std::max(b[1], p[0]);
                        b[2] = std::min(b[2], p[1]);
                        b[3] = std::max(b[3], p[1]);
                    }
                    return b;
                }
            },
            shape);
    }

    [[nodiscard]] bool contains(double y, double z) const {
        return std::visit(
            [&](const auto& s) {
                using S = std::decay_t<decltype(s)>;
                if constexpr (std::is_same_v<S, Rectangle>) {
                    return y > 0 && y < s.a && z > -s.b && z < 0;
                } else if constexpr (std::is_same_v<S, Disk>) {
                    return y * y + z * z < s.radius * s.radius * (1 - 1e-14);
                } else {
                    return detail::polygon_contains(s.vertices, y, z);
                }
            },
            shape);
    }

    /// `samples` points walking once around the boundary.
    [[nodiscard]] std::vector<Point2> boundary(int samples) const {
        std::vector<Point2> corners;
        if (const auto* d = std::get_if<Disk>(&shape)) {
            std::vector<Point2> pts;
            for (int i = 0; i < samples; ++i) {
                const double t = 2 * std::numbers::pi * i / samples;
                pts.push_back({d->radius * std::cos(t), d->radius * std::sin(t)});
            }
            return pts;
        }
        if (const auto* r = std::get_if<Rectangle>(&shape))
            corners = {{0, -r->b}, {r->a, -r->b}, {r->a, 0}, {0, 0}};
        else
            corners = std::get<Polygon>(shape).vertices;
        double perimeter = 0.0;
        for (std::size_t i = 0; i < corners.size(); ++i) {
            const auto& p = corners[i];
            const auto& q = corners[(i + 1) % corners.size()];
            perimeter += std::hypot(q[0] - p[0], q[1] - p[1]);
        }
        std::vector<Point2> pts;
        for (int i = 0; i < samples; ++i) {
            double s = perimeter * i / samples;
            for (std::size_t e = 0; e < corners.size(); ++e) {
                const auto& p = corners[e];
                const auto& q = corners[(e + 1) % corners.size()];
                const double len = std::hypot(q[0] - p[0], q[1] - p[1]);
                if (s <= len || e + 1 == corners.size()) {
                    const double w = std::min(s / len, 1.0);
                    pts.push_back({p[0] + w * (q[0] - p[0]), p[1] + w * (q[1] - p[1])});
                    break;
                }
                s -= len;
            }
        }
        return pts;
    }
};

/// Uniform lattice over the bounding box; nodes strictly inside the domain are
/// unknowns, all other nodes carry the Dirichlet value zero.
struct Grid2D {
    double y0 = 0, z0 = 0, hy = 0, hz = 0;
    int ny = 0, nz = 0;  // number of nodes per axis (intervals + 1)
    std::vector<char> inside;

    static Grid2D over(const CrossSectionSpec& spec) {
        const auto b = spec.bounds();
        Grid2D g;
        g.ny = g.nz = spec.grid_n + 1;
        g.y0 = b[0];
        g.z0 = b[2];
        g.hy = (b[1] - b[0]) / spec.grid_n;
        g.hz = (b[3] - b[2]) / spec.grid_n;
        g.inside.assign(static_cast<std::size_t>(g.ny) * g.nz, 0);
        for (int i = 1; i + 1 < g.ny; ++i)
            for (int j = 1; j + 1 < g.nz; ++j) g.inside[g.index(i, j)] = spec.contains(g.y(i), g.z(j)) ? 1 : 0;
        return g;
    }

    [[nodiscard]] std::size_t index(int i, int j) const { return static_cast<std::size_t>(i) * nz + j; }
    [[nodiscard]] double y(int i) const { return y0 + i * hy; }
    [[nodiscard]] double z(int j) const { return z0 + j * hz; }
    [[nodiscard]] std::size_t size() const { return inside.size(); }
    [[nodiscard]] double cell() const { return hy * hz; }

    bool operator==(const Grid2D& o) const {
        return y0 == o.y0 && z0 == o.z0 && hy == o.hy && hz == o.hz && ny == o.ny && nz == o.nz;
    }
};

/// Scalar field sampled on a Grid2D (lexicographic, y-major).
struct GridField {
    Grid2D grid;
    std::vector<double> values;

    /// Trapezoid inner product; the field vanishes on the lattice boundary.
    [[nodiscard]] double dot(const GridField& o) const {
        if (!(grid == o.grid)) throw invalid_input("grid mismatch between fields");
        double s = 0.0;
        for (std::size_t i = 0; i < values.size(); ++i) s += values[i] * o.values[i];
        return s * grid.cell();
    }
};

struct RectangleMode {
    int m = 1, n = 1;
};
struct DiskMode {
    int m = 0, l = 1;
    bool sine = false;
    double zero = 0.0;  // j_{m,l}
};
struct GridMode {
    std::vector<double> values;  // on TransverseModeSet::grid
};

struct TransverseMode {
    int index = 0;  // 1-based
    double energy = 0.0;
    std::variant<RectangleMode, DiskMode, GridMode> shape;
    double sign = 1.0;          // applied to the closed form
    bool degenerate = false;    // shares its eigenvalue with a neighbour
};

enum class ModePath { automatic, numeric };

struct ModePoint {
    double value = 0, dy = 0, dz = 0;
};

class TransverseModeSet {
public:
    CrossSectionSpec spec;
    Grid2D grid;                // lattice of the numeric path / sign convention
    bool numeric = false;
    std::vector<TransverseMode> modes;
    double max_residual = 0.0;  // eigensolver residual (numeric path)

    [[nodiscard]] std::size_t size() const { return modes.size(); }
    [[nodiscard]] const TransverseMode& operator[](int n) const { return modes.at(static_cast<std::size_t>(n - 1)); }
    [[nodiscard]] bool any_degenerate() const {
        return std::any_of(modes.begin(), modes.end(), [](const auto& m) { return m.degenerate; });
    }
    [[nodiscard]] std::vector<double> energies() const {
        std::vector<double> e;
        for (const auto& m : modes) e.push_back(m.energy);
        return e;
    }

    /// Closed-form value and gradient of mode n at (y, z).
    [[nodiscard]] ModePoint evaluate(int n, double y, double z) const {
        const auto& mode = (*this)[n];
        ModePoint p = std::visit(
            [&](const auto& s) -> ModePoint {
                using S = std::decay_t<decltype(s)>;
                if constexpr (std::is_same_v<S, RectangleMode>) {
                    const auto& r = std::get<Rectangle>(spec.shape);
                    const double c = 2.0 / std::sqrt(r.a * r.b);
                    const double ky = s.m * std::numbers::pi / r.a, kz = s.n * std::numbers::pi / r.b;
                    const double sy = std::sin(ky * y), cy = std::cos(ky * y);
                    const double sz = std::sin(kz * (z + r.b)), cz = std::cos(kz * (z + r.b));
                    return {c * sy * sz, c * ky * cy * sz, c * kz * sy * cz};
                } else if constexpr (std::is_same_v<S, DiskMode>) {
                    return disk_point(s, y, z);
                } else {
                    throw invalid_input("grid modes have no closed form");
                }
            },
            mode.shape);
        p.value *= mode.sign;
        p.dy *= mode.sign;
        p.dz *= mode.sign;
        return p;
    }

    /// Mode n sampled on the lattice.
    [[nodiscard]] GridField sample(int n) const {
        const auto& mode = (*this)[n];
        if (const auto* g = std::get_if<GridMode>(&mode.shape)) return {grid, g->values};
        GridField f{grid, std::vector<double>(grid.size(), 0.0)};
        for (int i = 0; i < grid.ny; ++i)
            for (int j = 0; j < grid.nz; ++j)
                if (grid.inside[grid.index(i, j)]) f.values[grid.index(i, j)] = evaluate(n, grid.y(i), grid.z(j)).value;
        return f;
    }

private:
    [[nodiscard]] ModePoint disk_point(const DiskMode& s, double y, double z) const {
        using boost::math::cyl_bessel_j;
        using boost::math::cyl_bessel_j_prime;
        const double R = std::get<Disk>(spec.shape).radius;
        const double kappa = s.zero / R;
        const double norm = s.m == 0 ? 1.0 / (std::sqrt(std::numbers::pi) * R * std::abs(cyl_bessel_j(1, s.zero)))
                                     : std::sqrt(2.0 / std::numbers::pi) /
                                           (R * std::abs(cyl_bessel_j(s.m + 1, s.zero)));
        const double r = std::hypot(y, z);
        if (r < 1e-12) {
            // only m = 1 has a nonzero gradient at the centre
            if (s.m == 0) return {norm, 0, 0};
            if (s.m == 1) return s.sine ? ModePoint{0, 0, norm * kappa / 2} : ModePoint{0, norm * kappa / 2, 0};
            return {0, 0, 0};
        }
        const double phi = std::atan2(z, y);
        const double ang = s.m == 0 ? 1.0 : (s.sine ? std::sin(s.m * phi) : std::cos(s.m * phi));
        const double dang = s.m == 0 ? 0.0 : (s.sine ? s.m * std::cos(s.m * phi) : -s.m * std::sin(s.m * phi));
        const double J = cyl_bessel_j(s.m, kappa * r);
        const double dJ = kappa * cyl_bessel_j_prime(s.m, kappa * r);
        const double dr = norm * dJ * ang, dphi = norm * J * dang;
        const double c = y / r, sn = z / r;
        return {norm * J * ang, c * dr - sn * dphi / r, sn * dr + c * dphi / r};
    }
};

namespace detail {

// degeneracy flags from consecutive gaps, then truncate to `count`
inline void flag_and_truncate(std::vector<TransverseMode>& modes, std::size_t count) {
    const double e1 = modes.front().energy;
    for (std::size_t i = 0; i + 1 < modes.size(); ++i)
        if (modes[i + 1].energy - modes[i].energy < 1e-8 * e1) modes[i].degenerate = modes[i + 1].degenerate = true;
    modes.resize(count);
    for (std::size_t i = 0; i < modes.size(); ++i) modes[i].index = static_cast<int>(i) + 1;
}

// sign so that the first lattice sample (lexicographic) above noise is positive
template <class Sampler>
double sign_from_first_sample(const Grid2D& g, Sampler&& value_at) {
    std::vector<double> v(g.size(), 0.0);
    double vmax = 0.0;
    for (int i = 0; i < g.ny; ++i)
        for (int j = 0; j < g.nz; ++j)
            if (g.inside[g.index(i, j)]) {
                v[g.index(i, j)] = value_at(i, j);
                vmax = std::max(vmax, std::abs(v[g.index(i, j)]));
            }
    for (double x : v)
        if (std::abs(x) > 1e-8 * vmax) return x > 0 ? 1.0 : -1.0;
    return 1.0;
}

inline std::vector<TransverseMode> rectangle_modes(const Rectangle& r, std::size_t wanted) {
    std::vector<TransverseMode> out;
    const int lim = static_cast<int>(wanted) + 1;
    for (int m = 1; m <= lim; ++m)
        for (int n = 1; n <= lim; ++n) {
            TransverseMode t;
            t.energy = std::pow(m * std::numbers::pi / r.a, 2) + std::pow(n * std::numbers::pi / r.b, 2);
            t.shape = RectangleMode{m, n};
            out.push_back(t);
        }
    std::stable_sort(out.begin(), out.end(), [](const auto& x, const auto& y) { return x.energy < y.energy; });
    out.resize(wanted);
    return out;
}

inline std::vector<TransverseMode> disk_modes(const Disk& d, std::size_t wanted) {
    std::vector<TransverseMode> out;
    const int lim = static_cast<int>(wanted) + 1;
    for (int m = 0; m <= lim; ++m)
        for (int l = 1; l <= lim; ++l) {
            const double j = boost::math::cyl_bessel_j_zero(static_cast<double>(m), l);
            for (int s = 0; s < (m == 0 ? 1 : 2); ++s) {
                TransverseMode t;
                t.energy = (j / d.radius) * (j / d.radius);
                t.shape = DiskMode{m, l, s == 1, j};
                out.push_back(t);
            }
        }
    std::stable_sort(out.begin(), out.end(), [](const auto& x, const auto& y) { return x.energy < y.energy; });
    out.resize(wanted);
    return out;
}

}  // namespace detail

/// Five-point Dirichlet Laplacian on the interior nodes of the lattice.
/// `unknown` maps lattice index to matrix row (-1 for boundary/outside).
inline Eigen::SparseMatrix<double> lattice_laplacian(const Grid2D& g, std::vector<int>& unknown) {
    unknown.assign(g.size(), -1);
    int n = 0;
    for (std::size_t i = 0; i < g.size(); ++i)
        if (g.inside[i]) unknown[i] = n++;
    const double cy = 1.0 / (g.hy * g.hy), cz = 1.0 / (g.hz * g.hz);
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(static_cast<std::size_t>(n) * 5);
    for (int i = 0; i < g.ny; ++i)
        for (int j = 0; j < g.nz; ++j) {
            const int r = unknown[g.index(i, j)];
            if (r < 0) continue;
            t.emplace_back(r, r, 2 * cy + 2 * cz);
            const int nb[4][2] = {{i - 1, j}, {i + 1, j}, {i, j - 1}, {i, j + 1}};
            const double w[4] = {cy, cy, cz, cz};
            for (int q = 0; q < 4; ++q) {
                const int c = unknown[g.index(nb[q][0], nb[q][1])];
                if (c >= 0) t.emplace_back(r, c, -w[q]);
            }
        }
    Eigen::SparseMatrix<double> L(n, n);
    L.setFromTriplets(t.begin(), t.end());
    return L;
}

/// Lowest `count` Dirichlet modes of the cross-section, nondecreasing.
/// Rectangle and disk use closed forms unless `path` forces the lattice solver.
inline TransverseModeSet solve_transverse_modes(const CrossSectionSpec& spec, int count,
                                                ModePath path = ModePath::automatic) {
    require(count >= 1, "mode count must be >= 1");
    spec.validate();
    TransverseModeSet set;
    set.spec = spec;
    set.grid = Grid2D::over(spec);
    const auto wanted = static_cast<std::size_t>(count) + 1;  // one extra to see a split degenerate pair
    const bool closed = path == ModePath::automatic && !std::holds_alternative<Polygon>(spec.shape);

    if (closed) {
        set.modes = std::holds_alternative<Rectangle>(spec.shape)
                        ? detail::rectangle_modes(std::get<Rectangle>(spec.shape), wanted)
                        : detail::disk_modes(std::get<Disk>(spec.shape), wanted);
        detail::flag_and_truncate(set.modes, static_cast<std::size_t>(count));
        for (auto& m : set.modes) {
            m.sign = 1.0;
            m.sign = detail::sign_from_first_sample(
                set.grid, [&](int i, int j) { return set.evaluate(m.index, set.grid.y(i), set.grid.z(j)).value; });
        }
        return set;
    }

    set.numeric = true;
    std::vector<int> unknown;
    const auto L = lattice_laplacian(set.grid, unknown);
    if (L.rows() < static_cast<Eigen::Index>(8 * wanted))
        throw numeric_failure("mesh too coarse: " + std::to_string(L.rows()) + " interior nodes for " +
                              std::to_string(count) + " modes");
    const auto eig = lowest_eigenpairs(L, static_cast<int>(wanted), 1e-10);
    set.max_residual = eig.max_residual;
    const double hmax = std::max(set.grid.hy, set.grid.hz);
    if (eig.values(count - 1) * hmax * hmax > 0.5)
        throw numeric_failure("mesh too coarse to resolve mode " + std::to_string(count));

    for (std::size_t q = 0; q < wanted; ++q) {
        TransverseMode m;
        m.energy = eig.values(static_cast<Eigen::Index>(q));
        GridMode g{std::vector<double>(set.grid.size(), 0.0)};
        const double scale = 1.0 / std::sqrt(set.grid.cell());  // unit trapezoid norm
        for (std::size_t i = 0; i < set.grid.size(); ++i)
            if (unknown[i] >= 0) g.values[i] = scale * eig.vectors(unknown[i], static_cast<Eigen::Index>(q));
        const double s = detail::sign_from_first_sample(
            set.grid, [&](int i, int j) { return g.values[set.grid.index(i, j)]; });
        for (double& v : g.values) v *= s;
        m.shape = std::move(g);
        set.modes.push_back(std::move(m));
    }
    detail::flag_and_truncate(set.modes, static_cast<std::size_t>(count));
    return set;
}

/// d_tau chi_n = (y - y0) d_z chi - (z - z0) d_y chi, sampled on the lattice.
/// Closed-form modes are differentiated exactly; lattice modes by central
/// differences with the Dirichlet zero outside the domain.
inline GridField angular_derivative(const TransverseModeSet& set, int n) {
    const auto& g = set.grid;
    const double y0 = set.spec.axis[0], z0 = set.spec.axis[1];
    GridField out{g, std::vector<double>(g.size(), 0.0)};
    const auto& mode = set[n];
    if (const auto* gm = std::get_if<GridMode>(&mode.shape)) {
        const auto& u = gm->values;
        for (int i = 1; i + 1 < g.ny; ++i)
            for (int j = 1; j + 1 < g.nz; ++j) {
                if (!g.inside[g.index(i, j)]) continue;
                const double dy = (u[g.index(i + 1, j)] - u[g.index(i - 1, j)]) / (2 * g.hy);
                const double dz = (u[g.index(i, j + 1)] - u[g.index(i, j - 1)]) / (2 * g.hz);
                out.values[g.index(i, j)] = (g.y(i) - y0) * dz - (g.z(j) - z0) * dy;
            }
        return out;
    }
    for (int i = 0; i < g.ny; ++i)
        for (int j = 0; j < g.nz; ++j) {
            if (!g.inside[g.index(i, j)]) continue;
            const auto p = set.evaluate(n, g.y(i), g.z(j));
            out.values[g.index(i, j)] = (g.y(i) - y0) * p.dz - (g.z(j) - z0) * p.dy;
        }
    return out;
}

struct CouplingMatrices {
    Eigen::MatrixXd T1;  // T1(n-1, k-1) = <chi_n, d_tau chi_k>, antisymmetrised
    Eigen::MatrixXd T2;  // T2(n-1, k-1) = <chi_n, d_tau^2 chi_k> = -<d_tau chi_n, d_tau chi_k>
    int K = 0;
    double asymmetry_residual = 0.0;  // max |T1[n][k] + T1[k][n]| before antisymmetrisation

    [[nodiscard]] double t1(int n, int k) const { return T1(n - 1, k - 1); }
    [[nodiscard]] double t2(int n, int k) const { return T2(n - 1, k - 1); }
};

/// Coupling matrices over all modes of the set. Closed forms use 64-point
/// Gauss–Legendre per axis (polar coordinates for the disk); lattice modes use
/// the trapezoid rule on the lattice.
inline CouplingMatrices coupling_matrices(const TransverseModeSet& set) {
    const int K = static_cast<int>(set.size());
    require(K >= 1, "coupling_matrices: empty mode set");
    Eigen::MatrixXd raw(K, K), T2(K, K);
    const double y0 = set.spec.axis[0], z0 = set.spec.axis[1];

    if (set.numeric) {
        std::vector<GridField> chi, dchi;
        for (int n = 1; n <= K; ++n) {
            chi.push_back(set.sample(n));
            if (chi.back().values.size() != set.grid.size()) throw invalid_input("grid mismatch in mode set");
            dchi.push_back(angular_derivative(set, n));
        }
        for (int n = 0; n < K; ++n)
            for (int k = 0; k < K; ++k) {
                raw(n, k) = chi[n].dot(dchi[k]);
                T2(n, k) = -dchi[n].dot(dchi[k]);
            }
    } else {
        // quadrature nodes and weights over the domain
        std::vector<std::array<double, 3>> nodes;  // y, z, weight
        const auto& gl = gauss_legendre<64>();
        if (const auto* r = std::get_if<Rectangle>(&set.spec.shape)) {
            for (std::size_t i = 0; i < gl.nodes.size(); ++i)
                for (std::size_t j = 0; j < gl.nodes.size(); ++j)
                    nodes.push_back({0.5 * r->a * (1 + gl.nodes[i]), -0.5 * r->b * (1 - gl.nodes[j]),
                                     0.25 * r->a * r->b * gl.weights[i] * gl.weights[j]});
        } else {
            const double R = std::get<Disk>(set.spec.shape).radius;
            int mmax = 0;
            for (const auto& m : set.modes) mmax = std::max(mmax, std::get<DiskMode>(m.shape).m);
            const int nphi = 4 * mmax + 68;
            for (std::size_t i = 0; i < gl.nodes.size(); ++i) {
                const double r = 0.5 * R * (1 + gl.nodes[i]);
                const double wr = 0.5 * R * gl.weights[i] * r;
                for (int q = 0; q < nphi; ++q) {
                    const double t = 2 * std::numbers::pi * q / nphi;
                    nodes.push_back({r * std::cos(t), r * std::sin(t), wr * 2 * std::numbers::pi / nphi});
                }
            }
        }
        Eigen::MatrixXd val(nodes.size(), K), dtau(nodes.size(), K);
        for (std::size_t q = 0; q < nodes.size(); ++q)
            for (int n = 0; n < K; ++n) {
                const auto p = set.evaluate(n + 1, nodes[q][0], nodes[q][1]);
                val(q, n) = p.value;
                dtau(q, n) = (nodes[q][0] - y0) * p.dz - (nodes[q][1] - z0) * p.dy;
            }
        Eigen::VectorXd w(nodes.size());
        for (std::size_t q = 0; q < nodes.size(); ++q) w(q) = nodes[q][2];
        raw = val.transpose() * w.asDiagonal() * dtau;
        T2 = -(dtau.transpose() * w.asDiagonal() * dtau);
    }

    CouplingMatrices c;
    c.K = K;
    c.asymmetry_residual = (raw + raw.transpose()).cwiseAbs().maxCoeff();
    c.T1 = 0.5 * (raw - raw.transpose());
    c.T2 = 0.5 * (T2 + T2.transpose());
    return c;
}

/// Points of the twisted tube surface f_eps(x, s), s on the boundary of the
/// cross-section, rotated about the twist axis. Rows are (x, y, z).
inline std::vector<std::array<double, 3>> twisted_surface_points(const CrossSectionSpec& spec, double eps,
                                                                 const TwistProfile& twist, double x_min,
                                                                 double x_max, int x_samples,
                                                                 int boundary_samples) {
    require(x_samples >= 1 && boundary_samples >= 3, "surface sampling needs >= 1 stations and >= 3 boundary points");
    require(x_max >= x_min, "surface x-range is empty");
    spec.validate();
    const auto ring = spec.boundary(boundary_samples);
    const double y0 = spec.axis[0], z0 = spec.axis[1];
    std::vector<std::array<double, 3>> pts;
    pts.reserve(ring.size() * static_cast<std::size_t>(x_samples));
    for (int i = 0; i < x_samples; ++i) {
        const double x = x_samples == 1 ? x_min : x_min + (x_max - x_min) * i / (x_samples - 1);
        const double c = std::cos(eps * twist.angle(x)), s = std::sin(eps * twist.angle(x));
        for (const auto& p : ring) {
            const double y = p[0] - y0, z = p[1] - z0;
            pts.push_back({x, y0 + y * c + z * s, z0 + z * c - y * s});
        }
    }
    return pts;
}

}  // namespace twistres
