#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "twistres/scaled_spectrum.hpp"
#include "twistres/width.hpp"

using namespace twistres;

namespace {

struct Setup {
    TransverseModeSet modes;
    CouplingMatrices coupling;
};

const Setup& rectangle(int K) {
    static std::map<int, Setup> cache;
    auto it = cache.find(K);
    if (it == cache.end()) {
        CrossSectionSpec spec{Rectangle{M_PI, M_PI / 2}};
        auto modes = solve_transverse_modes(spec, K);
        auto c = coupling_matrices(modes);
        it = cache.emplace(K, Setup{modes, c}).first;
    }
    return it->second;
}

ScanSetup pt_scan(double nu, int K = 4, double theta = 0.3) {
    const auto& r = rectangle(K);
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

ChannelSystem small_free(double eps, double theta, int K, double layer, double h = 0.25) {
    const auto& r = rectangle(std::max(K, 2));
    ScalingParams sp;
    sp.im_theta = theta;
    ChannelGridSpec g;
    g.far_spacing = h;
    g.core_spacing = h;
    g.scaling_radius = 5;
    g.layer_length = layer;
    return assemble(eps, sp, PotentialSpec::free(), TwistProfile::compact(1), r.modes, r.coupling, K, g);
}

ChannelSystem pt_system(double eps, double nu, int K, double theta) {
    const auto& r = rectangle(K);
    ScalingParams sp;
    sp.im_theta = theta;
    ChannelGridSpec g;
    g.reference_energy = 7.75;
    return assemble(eps, sp, PotentialSpec::poschl_teller(nu), TwistProfile::compact(20), r.modes, r.coupling, K, g);
}

double golden_rule(double nu, const TwistProfile& twist) {
    const auto& r = rectangle(4);
    const auto states = poschl_teller_spectrum(nu);
    const auto cls = classify_spectrum(r.modes, states);
    return width_coefficient(*cls.find(2, 1), r.modes, r.coupling, PotentialSpec::poschl_teller(nu), states[0], twist).a;
}

}  // namespace

// ---------------------------------------------------------------- rays

TEST(EssentialRays, GeometryAndDistance) {
    const auto rays = essential_rays(0.3, {5, 8});
    ASSERT_EQ(rays.size(), 2u);
    EXPECT_NEAR(std::arg(rays[0].direction), -0.6, 1e-15);
    EXPECT_NEAR(distance_to_rays(5.0 + 2.0 * std::polar(1.0, -0.6), rays), 0.0, 1e-14);
    EXPECT_NEAR(distance_to_rays({4.0, 0.0}, rays), 1.0, 1e-14);
    EXPECT_NEAR(distance_to_rays({5.0, 1.0}, rays), 1.0, 1e-14);
    const auto flat = essential_rays(0.0, {5});
    EXPECT_NEAR(distance_to_rays({7.0, 0.0}, flat), 0.0, 1e-15);
}

TEST(EssentialRays, FiniteLayerAngle) {
    EXPECT_NEAR(finite_layer_ray_angle(0.0, 10.0, 0.3), 0.6, 1e-15);
    EXPECT_LT(finite_layer_ray_angle(5.0, 10.0, 0.3), finite_layer_ray_angle(5.0, 100.0, 0.3));
}

// ---------------------------------------------------------------- assembly

TEST(ChannelSystem, UnscaledFreeSpectrumStartsAtE1) {
    const auto s = small_free(0.0, 0.0, 2, 10.0);
    const auto ev = dense_eigenvalues(s);
    double lowest = INFINITY, max_imag = 0.0;
    for (cplx e : ev) {
        lowest = std::min(lowest, e.real());
        max_imag = std::max(max_imag, std::abs(e.imag()));
    }
    // Dirichlet box of length 30
    EXPECT_GE(lowest, 5.0);
    EXPECT_NEAR(lowest, 5.0 + std::pow(M_PI / 30, 2), 1e-3);
    EXPECT_LT(max_imag, 1e-9);
}

TEST(ChannelSystem, EpsZeroIsBlockDiagonal) {
    const auto s = small_free(0.0, 0.3, 3, 10.0);
    EXPECT_EQ(s.max_coupling(), 0.0);
    const auto t = small_free(0.1, 0.3, 3, 10.0);
    EXPECT_GT(t.max_coupling(), 0.0);
}

TEST(ChannelSystem, ComplexSymmetric) {
    const auto s = pt_system(0.07, 10, 4, 0.3);
    const ChannelSystem::SpMat diff = s.A - ChannelSystem::SpMat(s.A.transpose());
    EXPECT_LT(diff.norm(), 1e-12 * s.A.norm());
}

TEST(ChannelSystem, ContinuumApproachesRaysAsTheLayerGrows) {
    double prev = INFINITY;
    for (double L : {10.0, 30.0, 90.0}) {
        const auto s = small_free(0.0, 0.3, 1, L);
        const double d = ray_deviation(s, 2.0);
        EXPECT_LT(d, prev) << L;
        // bounded by the finite-layer angle gap
        EXPECT_LT(d, 2.0 * std::sin(0.6 - finite_layer_ray_angle(5.0, L, 0.3)) + 0.02) << L;
        prev = d;
    }
}

TEST(ChannelSystem, Errors) {
    const auto& r = rectangle(4);
    ScalingParams sp;
    ChannelGridSpec g;
    g.reference_energy = 7.75;
    const auto V = PotentialSpec::poschl_teller(10);
    EXPECT_THROW(assemble(0.1, sp, V, TwistProfile::compact(2), r.modes, r.coupling, 5, g), invalid_input);
    ScalingParams bad;
    bad.im_theta = 0.7;
    EXPECT_THROW(assemble(0.1, bad, V, TwistProfile::compact(2), r.modes, r.coupling, 4, g), invalid_input);
    ChannelGridSpec coarse = g;
    coarse.far_spacing = 0.5;
    EXPECT_THROW(assemble(0.1, sp, V, TwistProfile::compact(2), r.modes, r.coupling, 4, coarse), invalid_input);
    ChannelGridSpec tight = g;
    tight.scaling_radius = 2.0;
    EXPECT_THROW(assemble(0.1, sp, V, TwistProfile::compact(2), r.modes, r.coupling, 4, tight), invalid_input);
}

// ---------------------------------------------------------------- eigenvalues

TEST(LocateResonance, EpsZeroGivesTheProductEigenvalue) {
    const double nu = 10;
    const auto s = pt_system(0.0, nu, 4, 0.3);
    const auto phi = poschl_teller_spectrum(nu)[0];
    const double E = 8.0 + phi.energy;
    const auto p = locate_resonance(s, E, 0.05);
    EXPECT_NEAR(p.value.real(), E, 1e-4);
    EXPECT_LT(std::abs(p.value.imag()), 1e-10);
    EXPECT_LE(p.residual, 1e-8);
    // the eigenvector is phi in channel 2 alone
    Eigen::VectorXcd u2 = s.channel(p.vector, 1);
    const Eigen::Index mid = s.nodes() / 2;
    ASSERT_EQ(s.x[static_cast<std::size_t>(mid)], 0.0);
    u2 *= phi.value(0.0) / u2[mid];
    double worst = 0.0;
    for (Eigen::Index i = 0; i < s.nodes(); ++i)
        if (std::abs(s.x[static_cast<std::size_t>(i)]) < 3) worst = std::max(worst, std::abs(u2[i] - phi.value(s.x[static_cast<std::size_t>(i)])));
    EXPECT_LT(worst, 1e-3);
    for (int k : {0, 2, 3}) EXPECT_LT(s.channel(p.vector, k).norm(), 1e-6);
}

TEST(LocateResonance, NothingInTheDisk) {
    const auto s = pt_system(0.05, 10, 4, 0.3);
    EXPECT_THROW(locate_resonance(s, {7.0, 0.5}, 0.01), numeric_failure);
    EXPECT_THROW(locate_resonance(s, 7.77, -1.0), invalid_input);
}

TEST(LocateResonance, ImaginaryPartIsNonPositive) {
    const auto s = pt_system(0.05, 10, 4, 0.3);
    const auto p = locate_resonance(s, 7.81, 0.05);
    EXPECT_LE(p.value.imag(), 1e-8);
    EXPECT_LT(p.value.imag(), -1e-4);
    EXPECT_LE(p.residual, 1e-8);
}

TEST(LocateResonance, IndependentOfTheScalingAngle) {
    cplx ref;
    bool first = true;
    for (double theta : {0.2, 0.3, 0.4}) {
        const auto s = pt_system(0.08, 10, 4, theta);
        const cplx E = locate_resonance(s, 7.8, 0.1).value;
        if (first) ref = E, first = false;
        EXPECT_LT(std::abs(E - ref), 1e-4 * std::abs(ref)) << theta;
        EXPECT_LT(std::abs(E.imag() - ref.imag()), 1e-6) << theta;
    }
}

TEST(NearestEigenvalues, SortedByDistance) {
    const auto s = pt_system(0.05, 10, 2, 0.3);
    const auto ev = nearest_eigenvalues(s, 7.77, 5);
    ASSERT_EQ(ev.size(), 5u);
    for (std::size_t i = 1; i < ev.size(); ++i) EXPECT_LE(std::abs(ev[i - 1] - 7.77), std::abs(ev[i] - 7.77));
}

// ---------------------------------------------------------------- scans

TEST(EpsilonScan, SlopeMatchesTheGoldenRule) {
    const double nu = 10;
    const auto t = epsilon_scan({0.0, 0.02, 0.04, 0.06, 0.08}, pt_scan(nu));
    ASSERT_EQ(t.rows.size(), 5u);
    EXPECT_EQ(t.rows[0].eps, 0.0);
    EXPECT_LT(std::abs(t.rows[0].E.imag()), 1e-10);
    for (std::size_t i = 1; i < t.rows.size(); ++i) {
        EXPECT_LT(t.rows[i].E.imag(), t.rows[i - 1].E.imag());
        EXPECT_LE(t.rows[i].residual, 1e-8);
    }
    const double a = golden_rule(nu, TwistProfile::compact(20));
    EXPECT_NEAR(t.a_fit, a, 0.05 * a);
    EXPECT_NEAR(t.a_cubic, a, 0.03 * a);
    EXPECT_LT(std::abs(t.a_cubic - a), std::abs(t.a_fit - a));
}

TEST(EpsilonScan, ShortTwistFixesTheAccelerationSign) {
    // X = 2: alpha'' overlaps phi, and the two signs of the alpha'' phi term
    // give widths 0.040 and 0.152
    const auto& r = rectangle(2);
    ScanSetup s;
    s.potential = PotentialSpec::delta_limit();
    s.state = delta_limit_bound_state();
    s.twist = TwistProfile::compact(2);
    s.modes = &r.modes;
    s.coupling = r.coupling;
    s.K = 2;
    const auto t = epsilon_scan({0.005, 0.01, 0.02}, s);
    const auto cls = classify_spectrum(r.modes, {s.state});
    WidthOptions o;
    const double a = width_coefficient(*cls.find(2, 1), r.modes, r.coupling, s.potential, s.state, s.twist, o).a;
    o.acceleration = AccelerationTerm::reversed;
    const double flipped_sign = width_coefficient(*cls.find(2, 1), r.modes, r.coupling, s.potential, s.state, s.twist, o).a;
    EXPECT_NEAR(t.a_cubic, a, 0.01 * a);
    EXPECT_GT(std::abs(t.a_cubic - flipped_sign), 0.5 * flipped_sign);
}

TEST(EpsilonScan, RealShiftFollowsFirstOrderTerm) {
    const double nu = 10;
    const auto t = epsilon_scan({0.0, 0.01}, pt_scan(nu));
    const auto& r = rectangle(4);
    const auto phi = poschl_teller_spectrum(nu)[0];
    const double C0 = twist_weighted_norm(TwistProfile::compact(20), phi) * r.coupling.t2(2, 2);
    const double shift = (t.rows[1].E.real() - t.rows[0].E.real()) / 1e-4;
    // -C0 plus the second-order real part of the channel sum
    EXPECT_NEAR(shift, -C0, 0.1 * std::abs(C0));
}

TEST(EpsilonScan, ChannelTruncationIsStable) {
    const auto a6 = epsilon_scan({0.04, 0.08}, pt_scan(10, 6));
    const auto a8 = epsilon_scan({0.04, 0.08}, pt_scan(10, 8));
    EXPECT_LT(std::abs(a6.a_fit - a8.a_fit), 0.02 * a8.a_fit);
}

TEST(EpsilonScan, OrderAndDuplicatesAreNormalized) {
    const auto t = epsilon_scan({0.06, 0.02, 0.06}, pt_scan(10, 2));
    ASSERT_EQ(t.rows.size(), 2u);
    EXPECT_EQ(t.rows[0].eps, 0.02);
    EXPECT_EQ(t.rows[1].eps, 0.06);
}

TEST(EpsilonScan, DiskHasNoWidth) {
    CrossSectionSpec disk{Disk{1.0}};
    const auto modes = solve_transverse_modes(disk, 6);
    ScanSetup s;
    s.potential = PotentialSpec::poschl_teller(10);
    s.state = poschl_teller_spectrum(10)[0];
    s.modes = &modes;
    s.coupling = coupling_matrices(modes);
    s.K = 6;
    s.n = 6;
    const auto t = epsilon_scan({0.02, 0.05, 0.08}, s);
    for (const auto& r : t.rows) EXPECT_LT(std::abs(r.E.imag()), 1e-8);
    EXPECT_LT(std::abs(t.a_fit), 1e-5);
}

TEST(EpsilonScan, Errors) {
    EXPECT_THROW(epsilon_scan({}, pt_scan(10, 2)), invalid_input);
    EXPECT_THROW(epsilon_scan({-0.1}, pt_scan(10, 2)), invalid_input);
    ScanSetup none = pt_scan(10, 2);
    none.modes = nullptr;
    EXPECT_THROW(epsilon_scan({0.1}, none), invalid_input);
}

TEST(FitScan, ExactQuadraticAndCubic) {
    ScanTable t;
    for (double e : {0.0, 0.1, 0.2, 0.3}) t.rows.push_back({e, {1.0, -0.5 * e * e + 0.2 * e * e * e}, 0.0});
    fit_scan(t);
    EXPECT_NEAR(t.a_cubic, 0.5, 1e-12);
    EXPECT_NEAR(t.cubic_coefficient, 0.2, 1e-12);
    EXPECT_GT(t.cubic_residual, 0.0);
    ScanTable q;
    for (double e : {0.1, 0.2}) q.rows.push_back({e, {1.0, -0.3 * e * e}, 0.0});
    fit_scan(q);
    EXPECT_NEAR(q.a_fit, 0.3, 1e-14);
    EXPECT_NEAR(q.a_fit_stderr, 0.0, 1e-14);
}
