#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "twistres/cross_section.hpp"

using namespace twistres;
using std::numbers::pi;

namespace {

CrossSectionSpec rect(double a, double b, int grid_n = 64) { return {Rectangle{a, b}, grid_n, {0, 0}}; }

// <chi_2, d_tau^2 chi_2> on [0,pi] x [0,pi/2] (mirror placement gives the same
// value); 30-digit adaptive quadrature of the twice-differentiated closed form.
constexpr double kT2_22 = -14.9493406684822643647241516665;

}  // namespace

TEST(TransverseModes, RectangleEnergiesClosedForm) {
    const auto set = solve_transverse_modes(rect(pi, pi / 2), 4);
    ASSERT_EQ(set.size(), 4u);
    const double expected[] = {5, 8, 13, 17};
    for (int n = 1; n <= 4; ++n) EXPECT_NEAR(set[n].energy, expected[n - 1], 1e-12);
    EXPECT_FALSE(set.any_degenerate());
}

TEST(TransverseModes, RectangleLatticeMatchesClosedFormAtSecondOrder) {
    double err_prev = 0.0;
    for (int grid_n : {32, 64, 128}) {
        const auto set = solve_transverse_modes(rect(pi, pi / 2, grid_n), 4, ModePath::numeric);
        const double err = std::abs(set[4].energy - 17.0);
        EXPECT_LT(err / 17.0, 5e-2);
        if (err_prev > 0) EXPECT_NEAR(err_prev / err, 4.0, 0.2);
        err_prev = err;
    }
}

TEST(TransverseModes, UnitNormBothPaths) {
    for (auto path : {ModePath::automatic, ModePath::numeric}) {
        const auto set = solve_transverse_modes(rect(pi, pi / 2, 48), 3, path);
        const auto f = set.sample(1);
        // the lattice trapezoid is exact for the numeric path and O(h^2) for the sampled closed form
        EXPECT_NEAR(f.dot(f), 1.0, path == ModePath::numeric ? 1e-12 : 1e-2);
    }
    const auto disk = solve_transverse_modes({Disk{1.0}, 32, {0, 0}}, 3);
    const auto c = coupling_matrices(disk);
    EXPECT_EQ(c.K, 3);
}

TEST(TransverseModes, SquareFlagsDegeneratePair) {
    const auto set = solve_transverse_modes(rect(pi, pi), 4);
    EXPECT_NEAR(set[2].energy, 5.0, 1e-12);
    EXPECT_NEAR(set[3].energy, 5.0, 1e-12);
    EXPECT_FALSE(set[1].degenerate);
    EXPECT_TRUE(set[2].degenerate);
    EXPECT_TRUE(set[3].degenerate);
    EXPECT_FALSE(set[4].degenerate);
}

TEST(TransverseModes, DegeneracyOfTruncatedPairIsStillSeen) {
    // count = 2 cuts the (1,2)/(2,1) pair in half
    const auto set = solve_transverse_modes(rect(pi, pi), 2);
    EXPECT_TRUE(set[2].degenerate);
}

TEST(TransverseModes, OrthonormalityClosedAndLattice) {
    const auto lattice = solve_transverse_modes(rect(pi, pi / 2, 64), 5, ModePath::numeric);
    for (int n = 1; n <= 5; ++n)
        for (int k = 1; k <= 5; ++k)
            EXPECT_NEAR(lattice.sample(n).dot(lattice.sample(k)), n == k ? 1.0 : 0.0, 1e-9);
}

TEST(TransverseModes, SignConventionFirstSamplePositive) {
    const auto set = solve_transverse_modes(rect(pi, pi / 2, 32), 6, ModePath::numeric);
    for (int n = 1; n <= 6; ++n) {
        const auto f = set.sample(n);
        double vmax = 0;
        for (double v : f.values) vmax = std::max(vmax, std::abs(v));
        for (double v : f.values)
            if (std::abs(v) > 1e-8 * vmax) {
                EXPECT_GT(v, 0.0) << "mode " << n;
                break;
            }
    }
}

TEST(TransverseModes, InvalidInputs) {
    EXPECT_THROW(solve_transverse_modes(rect(pi, pi / 2, 8), 2), invalid_input);
    EXPECT_THROW(solve_transverse_modes(rect(-1, 1), 2), invalid_input);
    EXPECT_THROW(solve_transverse_modes(rect(pi, pi / 2), 0), invalid_input);
    CrossSectionSpec bowtie{Polygon{{{0, 0}, {1, 1}, {1, 0}, {0, 1}}}, 32, {0, 0}};
    EXPECT_THROW(solve_transverse_modes(bowtie, 2), invalid_input);
    // 16 intervals cannot carry 40 modes
    EXPECT_THROW(solve_transverse_modes(rect(pi, pi / 2, 16), 40, ModePath::numeric), numeric_failure);
}

TEST(TransverseModes, PolygonRectangleAgreesWithClosedForm) {
    CrossSectionSpec poly{Polygon{{{0, -pi / 2}, {pi, -pi / 2}, {pi, 0}, {0, 0}}}, 96, {0, 0}};
    const auto set = solve_transverse_modes(poly, 3);
    EXPECT_TRUE(set.numeric);
    EXPECT_NEAR(set[1].energy, 5.0, 5e-3);
    EXPECT_NEAR(set[2].energy, 8.0, 1e-2);
}

TEST(TransverseModes, LShapedPolygonSolves) {
    CrossSectionSpec ell{Polygon{{{0, 0}, {2, 0}, {2, 1}, {1, 1}, {1, 2}, {0, 2}}}, 64, {0.5, 0.5}};
    const auto set = solve_transverse_modes(ell, 4);
    for (int n = 2; n <= 4; ++n) EXPECT_GE(set[n].energy, set[n - 1].energy);
    // the L-shape is not rotationally symmetric about (0.5, 0.5)
    const auto c = coupling_matrices(set);
    EXPECT_GT(c.T1.cwiseAbs().maxCoeff(), 1e-3);
}

TEST(AngularDerivative, VanishesOnRadialDiskMode) {
    const auto set = solve_transverse_modes({Disk{1.0}, 48, {0, 0}}, 1);
    const auto d = angular_derivative(set, 1);
    for (double v : d.values) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(AngularDerivative, RectangleGroundModeMatchesFiniteDifferences) {
    const auto set = solve_transverse_modes(rect(pi, pi / 2, 40), 2);
    const auto d = angular_derivative(set, 1);
    const auto& g = d.grid;
    double vmax = 0;
    const double h = 1e-5;
    for (int i = 1; i + 1 < g.ny; ++i)
        for (int j = 1; j + 1 < g.nz; ++j) {
            const double y = g.y(i), z = g.z(j);
            const double dz = (set.evaluate(1, y, z + h).value - set.evaluate(1, y, z - h).value) / (2 * h);
            const double dy = (set.evaluate(1, y + h, z).value - set.evaluate(1, y - h, z).value) / (2 * h);
            EXPECT_NEAR(d.values[g.index(i, j)], y * dz - z * dy, 1e-7);
            vmax = std::max(vmax, std::abs(d.values[g.index(i, j)]));
        }
    EXPECT_GT(vmax, 0.1);
}

TEST(AngularDerivative, RectangleGroundModeSplitsUnderPointReflection) {
    // Under the centre reflection (y, z) -> (a - y, -b - z), chi_1 is even. The
    // generator about the centre keeps that parity while the translation part
    // c_y d_z - c_z d_y flips it, so d_tau chi_1 = even + odd with known pieces.
    const double a = pi, b = pi / 2, cy = a / 2, cz = -b / 2;
    const auto set = solve_transverse_modes(rect(a, b, 40), 1);
    const auto d = angular_derivative(set, 1);
    const auto& g = d.grid;
    for (int i = 1; i + 1 < g.ny; ++i)
        for (int j = 1; j + 1 < g.nz; ++j) {
            const double here = d.values[g.index(i, j)];
            const double mirror = d.values[g.index(g.ny - 1 - i, g.nz - 1 - j)];
            const auto p = set.evaluate(1, g.y(i), g.z(j));
            const double odd_part = cy * p.dz - cz * p.dy;
            const double even_part = (g.y(i) - cy) * p.dz - (g.z(j) - cz) * p.dy;
            EXPECT_NEAR(0.5 * (here - mirror), odd_part, 1e-10);
            EXPECT_NEAR(0.5 * (here + mirror), even_part, 1e-10);
        }
}

TEST(AngularDerivative, ModeIsOrthogonalToItsRotation) {
    const auto set = solve_transverse_modes(rect(pi, pi / 2, 64), 4);
    const auto c = coupling_matrices(set);
    for (int n = 1; n <= 4; ++n) EXPECT_NEAR(c.t1(n, n), 0.0, 1e-12);
    const auto lattice = solve_transverse_modes(rect(pi, pi / 2, 64), 4, ModePath::numeric);
    for (int n = 1; n <= 4; ++n) EXPECT_NEAR(lattice.sample(n).dot(angular_derivative(lattice, n)), 0.0, 1e-10);
}

TEST(CouplingMatrices, RectangleCouplingConstant) {
    const auto c = coupling_matrices(solve_transverse_modes(rect(pi, pi / 2), 4));
    EXPECT_NEAR(c.t1(1, 2), -2.0 / 3.0, 1e-12);
    EXPECT_NEAR(c.t1(2, 1), 2.0 / 3.0, 1e-12);
    EXPECT_LE(c.asymmetry_residual, 1e-8);
}

TEST(CouplingMatrices, SecondDerivativeDiagonalAgainstOracle) {
    const auto c = coupling_matrices(solve_transverse_modes(rect(pi, pi / 2), 4));
    EXPECT_NEAR(c.t2(2, 2), kT2_22, 1e-8);
    for (int n = 1; n <= 4; ++n) EXPECT_LE(c.t2(n, n), 0.0);
}

TEST(CouplingMatrices, CompletenessTailShrinksWithTruncation) {
    const auto c = coupling_matrices(solve_transverse_modes(rect(pi, pi / 2), 30));
    for (int n = 1; n <= 3; ++n) {
        double prev = INFINITY, sum = 0.0, gap5 = 0.0;
        for (int K = 1; K <= 30; ++K) {
            sum += c.t1(K, n) * c.t1(K, n);
            const double gap = std::abs(c.t2(n, n) + sum);
            EXPECT_LE(gap, prev + 1e-12);
            if (K == 5) gap5 = gap;
            prev = gap;
        }
        // d_tau chi_n does not vanish on the boundary, so the sine series converges slowly
        EXPECT_LT(prev, gap5);
        EXPECT_LT(prev, 0.25 * std::abs(c.t2(n, n)));
    }
}

TEST(CouplingMatrices, RadialDiskRowsVanish) {
    const auto set = solve_transverse_modes({Disk{1.0}, 32, {0, 0}}, 8);
    const auto c = coupling_matrices(set);
    EXPECT_LE(c.asymmetry_residual, 1e-8);
    for (int n = 1; n <= 8; ++n) {
        if (set[n].degenerate) continue;
        for (int k = 1; k <= 8; ++k) EXPECT_LE(c.t1(k, n) * c.t1(k, n), 1e-10);
    }
}

TEST(CouplingMatrices, RadialDiskRowsVanishOnLattice) {
    const auto set = solve_transverse_modes({Disk{1.0}, 64, {0, 0}}, 6, ModePath::numeric);
    EXPECT_FALSE(set[1].degenerate);
    const auto c = coupling_matrices(set);
    for (int k = 1; k <= 6; ++k) EXPECT_LE(c.t1(k, 1) * c.t1(k, 1), 1e-10);
}

TEST(CouplingMatrices, LatticeCouplingConvergesAtSecondOrder) {
    double prev = 0;
    for (int grid_n : {32, 64, 128}) {
        const auto c = coupling_matrices(solve_transverse_modes(rect(pi, pi / 2, grid_n), 2, ModePath::numeric));
        const double err = std::abs(c.t1(1, 2) + 2.0 / 3.0);
        if (prev > 0) EXPECT_NEAR(prev / err, 4.0, 0.3);
        prev = err;
    }
}

TEST(TwistedSurface, UntwistedIsPrism) {
    const auto spec = rect(pi, pi / 2);
    const auto pts = twisted_surface_points(spec, 0.0, TwistProfile::linear(), -2, 2, 5, 40);
    ASSERT_EQ(pts.size(), 200u);
    for (int i = 1; i < 5; ++i)
        for (int q = 0; q < 40; ++q) {
            EXPECT_DOUBLE_EQ(pts[40 * i + q][1], pts[q][1]);
            EXPECT_DOUBLE_EQ(pts[40 * i + q][2], pts[q][2]);
        }
}

TEST(TwistedSurface, LinearTwistRotatesByEpsX) {
    const auto spec = rect(pi, pi / 2);
    const double eps = 0.3;
    const auto ring = spec.boundary(24);
    const auto pts = twisted_surface_points(spec, eps, TwistProfile::linear(), 0, 3, 4, 24);
    for (int i = 0; i < 4; ++i) {
        const double x = i, t = eps * x;
        for (int q = 0; q < 24; ++q) {
            const auto& p = pts[24 * i + q];
            EXPECT_DOUBLE_EQ(p[0], x);
            EXPECT_NEAR(p[1], ring[q][0] * std::cos(t) + ring[q][1] * std::sin(t), 1e-14);
            EXPECT_NEAR(p[2], ring[q][1] * std::cos(t) - ring[q][0] * std::sin(t), 1e-14);
            EXPECT_NEAR(p[1] * p[1] + p[2] * p[2], ring[q][0] * ring[q][0] + ring[q][1] * ring[q][1], 1e-12);
        }
    }
}
