#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "twistres/errors.hpp"

namespace twistres {

/// Twist profile alpha(x): the cross-section at x is rotated by eps * alpha(x).
///
/// Three kinds are supported:
///  - linear:  alpha(x) = x everywhere;
///  - compact: alpha' = 1 on [-X, X], alpha' = 0 outside [-2X, 2X], joined by a
///    quintic smoothstep so that alpha' is C^2 and alpha'' is bounded;
///  - sampled: alpha' and alpha'' given on a strictly increasing grid, linearly
///    interpolated and taken as zero outside the grid.
class TwistProfile {
public:
    enum class Kind { linear, compact, sampled };

    static TwistProfile linear() { return TwistProfile(Kind::linear); }

    static TwistProfile compact(double half_width) {
        require(half_width > 0.0, "compact twist needs X > 0");
        TwistProfile t(Kind::compact);
        t.half_width_ = half_width;
        return t;
    }

    static TwistProfile sampled(std::vector<double> x, std::vector<double> rate,
                                std::vector<double> rate_derivative) {
        require(x.size() >= 2 && x.size() == rate.size() && x.size() == rate_derivative.size(),
                "sampled twist needs matching x, alpha', alpha'' columns with at least two rows");
        for (std::size_t i = 1; i < x.size(); ++i)
            require(x[i] > x[i - 1], "sampled twist grid must be strictly increasing");
        TwistProfile t(Kind::sampled);
        t.x_ = std::move(x);
        t.rate_ = std::move(rate);
        t.rate_derivative_ = std::move(rate_derivative);
        // alpha by cumulative trapezoid, anchored so that alpha(0) = 0 when 0 is inside the grid
        t.angle_.assign(t.x_.size(), 0.0);
        for (std::size_t i = 1; i < t.x_.size(); ++i)
            t.angle_[i] = t.angle_[i - 1] + 0.5 * (t.rate_[i] + t.rate_[i - 1]) * (t.x_[i] - t.x_[i - 1]);
        const double shift = t.x_.front() <= 0.0 && t.x_.back() >= 0.0 ? t.interp(t.angle_, 0.0) : 0.0;
        for (double& a : t.angle_) a -= shift;
        return t;
    }

    [[nodiscard]] Kind kind() const { return kind_; }
    [[nodiscard]] double half_width() const { return half_width_; }

    /// alpha(x)
    [[nodiscard]] double angle(double x) const {
        switch (kind_) {
        case Kind::linear: return x;
        case Kind::compact: {
            const double X = half_width_, ax = std::abs(x);
            if (ax <= X) return x;
            const double t = std::min((ax - X) / X, 1.0);
            // integral of (1 - smoothstep) from 0 to t
            const double integral = t - (t * t * t * t * (2.5 + t * (-3.0 + t)));
            return std::copysign(X + X * integral, x);
        }
        case Kind::sampled:
            if (x <= x_.front()) return angle_.front();
            if (x >= x_.back()) return angle_.back();
            return interp(angle_, x);
        }
        return 0.0;
    }

    /// alpha'(x)
    [[nodiscard]] double rate(double x) const {
        switch (kind_) {
        case Kind::linear: return 1.0;
        case Kind::compact: {
            const double X = half_width_, ax = std::abs(x);
            if (ax <= X) return 1.0;
            if (ax >= 2.0 * X) return 0.0;
            return 1.0 - smoothstep((ax - X) / X);
        }
        case Kind::sampled: return outside(x) ? 0.0 : interp(rate_, x);
        }
        return 0.0;
    }

    /// alpha''(x)
    [[nodiscard]] double rate_derivative(double x) const {
        switch (kind_) {
        case Kind::linear: return 0.0;
        case Kind::compact: {
            const double X = half_width_, ax = std::abs(x);
            if (ax <= X || ax >= 2.0 * X) return 0.0;
            const double t = (ax - X) / X;
            return -std::copysign(smoothstep_derivative(t) / X, x);
        }
        case Kind::sampled: return outside(x) ? 0.0 : interp(rate_derivative_, x);
        }
        return 0.0;
    }

    /// Points where alpha' or alpha'' lose smoothness; quadrature panels split here.
    [[nodiscard]] std::vector<double> breakpoints() const {
        if (kind_ == Kind::compact) {
            const double X = half_width_;
            return {-2 * X, -X, X, 2 * X};
        }
        if (kind_ == Kind::sampled) return x_;
        return {};
    }

    /// Radius beyond which alpha' vanishes identically (infinity for linear).
    [[nodiscard]] double support_radius() const {
        switch (kind_) {
        case Kind::linear: return INFINITY;
        case Kind::compact: return 2.0 * half_width_;
        case Kind::sampled: return std::max(std::abs(x_.front()), std::abs(x_.back()));
        }
        return INFINITY;
    }

    [[nodiscard]] std::string name() const {
        switch (kind_) {
        case Kind::linear: return "linear";
        case Kind::compact: return "compact";
        case Kind::sampled: return "sampled";
        }
        return "?";
    }

private:
    explicit TwistProfile(Kind k) : kind_(k) {}

    static double smoothstep(double t) { return t * t * t * (10.0 + t * (-15.0 + 6.0 * t)); }
    static double smoothstep_derivative(double t) { return 30.0 * t * t * (1.0 - t) * (1.0 - t); }

    [[nodiscard]] bool outside(double x) const { return x < x_.front() || x > x_.back(); }

    [[nodiscard]] double interp(const std::vector<double>& y, double x) const {
        auto it = std::upper_bound(x_.begin(), x_.end(), x);
        std::size_t i = std::clamp<std::size_t>(static_cast<std::size_t>(it - x_.begin()), 1, x_.size() - 1);
        const double w = (x - x_[i - 1]) / (x_[i] - x_[i - 1]);
        return (1.0 - w) * y[i - 1] + w * y[i];
    }

    Kind kind_;
    double half_width_ = 0.0;
    std::vector<double> x_, rate_, rate_derivative_, angle_;
};

}  // namespace twistres
