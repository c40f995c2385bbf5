#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>

namespace twistres {

/// Nodes and weights of an N-point Gauss–Legendre rule on [-1, 1], ascending.
struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

template <unsigned N>
const QuadratureRule& gauss_legendre() {
    static const QuadratureRule rule = [] {
        // boost stores the non-negative half of the symmetric rule
        using G = boost::math::quadrature::gauss<double, N>;
        const auto& x = G::abscissa();
        const auto& w = G::weights();
        QuadratureRule r;
        for (std::size_t i = x.size(); i-- > 0;) {
            if (x[i] == 0.0) continue;
            r.nodes.push_back(-x[i]);
            r.weights.push_back(w[i]);
        }
        for (std::size_t i = 0; i < x.size(); ++i) {
            r.nodes.push_back(x[i]);
            r.weights.push_back(w[i]);
        }
        return r;
    }();
    return rule;
}

/// Panel boundaries covering [lo, hi], split at every breakpoint inside the
/// interval, no panel wider than `max_width`.
inline std::vector<double> panel_edges(double lo, double hi, std::vector<double> breakpoints,
                                       double max_width) {
    breakpoints.push_back(lo);
    breakpoints.push_back(hi);
    std::sort(breakpoints.begin(), breakpoints.end());
    std::vector<double> edges;
    for (std::size_t i = 0; i + 1 < breakpoints.size(); ++i) {
        const double a = std::clamp(breakpoints[i], lo, hi);
        const double b = std::clamp(breakpoints[i + 1], lo, hi);
        if (b - a <= 1e-14 * std::max(1.0, std::abs(b))) continue;
        const int pieces = std::max(1, static_cast<int>(std::ceil((b - a) / max_width)));
        for (int p = 0; p < pieces; ++p) edges.push_back(a + (b - a) * p / pieces);
    }
    edges.push_back(hi);
    return edges;
}

/// Composite 20-point Gauss–Legendre integral of f over [lo, hi].
template <class F>
auto integrate(F&& f, double lo, double hi, const std::vector<double>& breakpoints = {},
               double max_width = 1.0) {
    const auto& rule = gauss_legendre<20>();
    const auto edges = panel_edges(lo, hi, breakpoints, max_width);
    decltype(f(lo)) sum{};
    for (std::size_t p = 0; p + 1 < edges.size(); ++p) {
        const double c = 0.5 * (edges[p] + edges[p + 1]);
        const double h = 0.5 * (edges[p + 1] - edges[p]);
        for (std::size_t q = 0; q < rule.nodes.size(); ++q) sum += rule.weights[q] * h * f(c + h * rule.nodes[q]);
    }
    return sum;
}

}  // namespace twistres
