#pragma once

// One-dimensional grids along the waveguide axis.
//
// Nodes are x(s) for s on a uniform lattice, with the spacing profile
//     h(s) = [ (h_core cosh(kappa s))^-4 + h_far^-4 ]^-1/4,
// i.e. geometric growth away from x = 0 that saturates at h_far. A smooth map
// keeps the three-point second difference globally second order, so halving
// the s-step supports Richardson extrapolation. The grid is symmetric and
// always has a node at x = 0.
//
// Exterior complex scaling bends the grid into the complex plane beyond
// |x| = R: z = sign(x) (R + (|x| - R) e^{i theta}).

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include "twistres/errors.hpp"
#include "twistres/quadrature.hpp"

namespace twistres {

using cplx = std::complex<double>;

struct LineGridOptions {
    double half_length = 50.0;   // nodes cover at least [-L, L]
    double far_spacing = 0.01;   // asymptotic spacing
    double core_spacing = 0.01;  // spacing at x = 0 (<= far_spacing)
    double growth = 0.02;        // per-node growth rate of the spacing in the graded core
    int refine = 1;              // s-step is 1/refine; refine = 2 nests the refine = 1 nodes
};

inline std::vector<double> make_line_grid(const LineGridOptions& o) {
    require(o.half_length > 0 && o.far_spacing > 0 && o.core_spacing > 0 && o.refine >= 1,
            "line grid needs positive length, spacings and refinement");
    const double hf = std::min(o.core_spacing, o.far_spacing), hc = o.far_spacing;
    const bool uniform = hf >= hc * (1 - 1e-12);
    auto spacing = [&](double s) {
        if (uniform) return hc;
        const double core = hf * std::cosh(std::min(o.growth * s, 300.0));
        return std::pow(std::pow(core, -4.0) + std::pow(hc, -4.0), -0.25);
    };
    // x at integer s by integrating the spacing panel by panel; then the
    // refined nodes inside each unit panel
    const auto& gl = gauss_legendre<20>();
    auto integral = [&](double a, double b) {
        double sum = 0.0;
        for (std::size_t q = 0; q < gl.nodes.size(); ++q)
            sum += gl.weights[q] * spacing(0.5 * (a + b) + 0.5 * (b - a) * gl.nodes[q]);
        return 0.5 * (b - a) * sum;
    };
    std::vector<double> half{0.0};
    for (int s = 0; half.back() < o.half_length; ++s) {
        const double base = half.back();
        for (int r = 1; r <= o.refine; ++r)
            half.push_back(base + (uniform ? hc * r / o.refine : integral(s, s + static_cast<double>(r) / o.refine)));
        if (half.size() > 50'000'000) throw invalid_input("line grid would exceed 5e7 nodes");
    }
    std::vector<double> x;
    x.reserve(2 * half.size() - 1);
    for (std::size_t i = half.size(); i-- > 1;) x.push_back(-half[i]);
    for (double v : half) x.push_back(v);
    return x;
}

/// Complex contour through the nodes: identity for |x| <= radius, rotated by
/// `theta` beyond it.
inline std::vector<cplx> exterior_scaled(const std::vector<double>& x, double radius, double theta) {
    std::vector<cplx> z(x.size());
    const cplx rot = std::polar(1.0, theta);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double ax = std::abs(x[i]);
        z[i] = ax <= radius ? cplx(x[i]) : std::copysign(1.0, x[i]) * (radius + (ax - radius) * rot);
    }
    return z;
}

/// Lumped (trapezoid) weights along a contour; end nodes get half an edge.
inline std::vector<cplx> contour_weights(const std::vector<cplx>& z) {
    std::vector<cplx> w(z.size(), 0.0);
    for (std::size_t i = 0; i + 1 < z.size(); ++i) {
        const cplx h = z[i + 1] - z[i];
        w[i] += 0.5 * h;
        w[i + 1] += 0.5 * h;
    }
    return w;
}

/// Richardson combination of two second-order results at spacings h and h/2.
template <class T>
T richardson(const T& coarse, const T& fine) {
    return (4.0 * fine - coarse) / 3.0;
}

}  // namespace twistres
