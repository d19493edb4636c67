#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dnp/error.hpp"
#include "dnp/mesh.hpp"

namespace dnp {

/// Value of a convex conjugate together with a flag telling whether the
/// supremum was cut off at the search bracket (bounded alpha).
struct ConjugateValue {
    double value = 0.0;
    bool bracket_limited = false;
};

/// Scalar maximal monotone, single-valued nonlinearity alpha with primitive
/// A(s) = int_0^s alpha and conjugate A*. The kinds are
///  - power: alpha(s) = |s|^{p-2} s, A = |s|^p/p, A* = |xi|^{p'}/p';
///  - piecewise_linear: linear interpolation between knots, linear
///    extrapolation with the end slopes, p = 2 growth. A repeated abscissa
///    encodes a jump; at a breakpoint the left value is taken;
///  - tabulated: like piecewise_linear, strictly increasing abscissae.
/// Every kind may carry an additive linear term kappa s (A gains kappa s^2/2).
class Nonlinearity {
public:
    enum class Kind { power, piecewise_linear, tabulated };

    static Nonlinearity power(double p)
    {
        if (!(p > 1.0) || !std::isfinite(p))
            throw ConfigError("power exponent must be > 1", "problem.p");
        Nonlinearity nl;
        nl.kind_ = Kind::power;
        nl.p_ = p;
        return nl;
    }

    /// Knots (s_k, alpha_k) with nondecreasing s_k; equal abscissae form a jump.
    static Nonlinearity piecewise_linear(std::vector<std::pair<double, double>> knots)
    {
        Nonlinearity nl;
        nl.kind_ = Kind::piecewise_linear;
        nl.p_ = 2.0;
        nl.build_segments(std::move(knots), false);
        return nl;
    }

    static Nonlinearity tabulated(std::vector<std::pair<double, double>> knots)
    {
        Nonlinearity nl;
        nl.kind_ = Kind::tabulated;
        nl.p_ = 2.0;
        nl.build_segments(std::move(knots), true);
        return nl;
    }

    /// alpha(s) + kappa s.
    Nonlinearity with_shift(double kappa) const
    {
        if (!(kappa >= 0.0))
            throw ConfigError("linear shift must be nonnegative");
        Nonlinearity nl = *this;
        nl.shift_ += kappa;
        return nl;
    }

    Kind kind() const noexcept { return kind_; }
    double p() const noexcept { return p_; }
    double shift() const noexcept { return shift_; }

    double operator()(double s) const { return base_alpha(s) + shift_ * s; }

    /// Newton curvature alpha'(s). For power p < 2 the singular slope at
    /// s = 0 is replaced by (p-1)(s^2 + floor^2)^{(p-2)/2}.
    double derivative(double s, double floor = 1e-8) const
    {
        double d = 0.0;
        switch (kind_) {
        case Kind::power:
            if (p_ == 2.0)
                d = 1.0;
            else if (p_ > 2.0)
                d = (p_ - 1.0) * std::pow(std::abs(s), p_ - 2.0);
            else
                d = (p_ - 1.0) * std::pow(s * s + floor * floor, 0.5 * (p_ - 2.0));
            break;
        default:
            d = segment_for(s).slope;
            break;
        }
        return d + shift_;
    }

    double primitive(double s) const
    {
        double a = 0.0;
        switch (kind_) {
        case Kind::power:
            a = p_ == 2.0 ? 0.5 * s * s : std::pow(std::abs(s), p_) / p_;
            break;
        default:
            a = integral_from_first_knot(s) - zero_offset_;
            break;
        }
        return a + 0.5 * shift_ * s * s;
    }

    /// A*(xi) = sup_s (xi s - A(s)). Closed form for an unshifted power,
    /// otherwise golden-section maximisation of the concave map s -> xi s - A(s)
    /// over a bracket grown until alpha crosses xi.
    ConjugateValue conjugate(double xi) const
    {
        if (kind_ == Kind::power && shift_ == 0.0) {
            const double q = conjugate_exponent(p_);
            return {p_ == 2.0 ? 0.5 * xi * xi : std::pow(std::abs(xi), q) / q, false};
        }
        constexpr double max_reach = 1e8;
        bool limited = false;
        double lo = 0.0, hi = 0.0;
        if ((*this)(0.0) <= xi) {
            double step = 1.0;
            hi = step;
            while ((*this)(hi) < xi) {
                lo = hi;
                step *= 2.0;
                hi += step;
                if (hi > max_reach) {
                    hi = max_reach;
                    limited = (*this)(hi) < xi;
                    break;
                }
            }
        } else {
            double step = 1.0;
            lo = -step;
            while ((*this)(lo) > xi) {
                hi = lo;
                step *= 2.0;
                lo -= step;
                if (lo < -max_reach) {
                    lo = -max_reach;
                    limited = (*this)(lo) > xi;
                    break;
                }
            }
        }
        auto objective = [&](double s) { return xi * s - primitive(s); };
        const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
        double a = lo, b = hi;
        double c = b - invphi * (b - a), d = a + invphi * (b - a);
        double fc = objective(c), fd = objective(d);
        for (int it = 0; it < 200 && (b - a) > 1e-13 * (1.0 + std::abs(a) + std::abs(b)); ++it) {
            if (fc > fd) {
                b = d;
                d = c;
                fd = fc;
                c = b - invphi * (b - a);
                fc = objective(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + invphi * (b - a);
                fd = objective(d);
            }
        }
        double best = std::max({objective(lo), objective(hi), fc, fd, objective(0.5 * (a + b))});
        return {best, limited};
    }

    /// Knots as given at construction (empty for power).
    const std::vector<std::pair<double, double>>& knots() const noexcept { return knots_; }

private:
    struct Segment {
        double lo, hi;      // (lo, hi]
        double value_lo;    // right limit at lo
        double slope;
        double eval(double s) const { return value_lo + slope * (s - lo); }
    };

    double base_alpha(double s) const
    {
        if (kind_ == Kind::power) {
            if (p_ == 2.0)
                return s;
            const double a = std::abs(s);
            return a == 0.0 ? 0.0 : std::copysign(std::pow(a, p_ - 1.0), s);
        }
        return segment_for(s).eval(s);
    }

    const Segment& segment_for(double s) const
    {
        // segments_ sorted; find first with s <= hi.
        auto it = std::lower_bound(segments_.begin(), segments_.end(), s,
                                   [](const Segment& seg, double x) { return seg.hi < x; });
        if (it == segments_.end())
            return segments_.back();
        return *it;
    }

    double integral_from_first_knot(double s) const
    {
        // int_{s_0}^{s} alpha, exact on linear pieces.
        const double s0 = segments_.front().hi;
        if (s <= s0)
            return -0.5 * (s0 - s) * (segments_.front().eval(s) + segments_.front().eval(s0));
        double total = 0.0;
        for (std::size_t k = 1; k < segments_.size(); ++k) {
            const Segment& seg = segments_[k];
            const double b = std::min(s, seg.hi);
            if (b > seg.lo)
                total += 0.5 * (b - seg.lo) * (seg.value_lo + seg.eval(b));
            if (s <= seg.hi)
                break;
        }
        return total;
    }

    void build_segments(std::vector<std::pair<double, double>> knots, bool strict)
    {
        if (knots.size() < 2)
            throw ConfigError("piecewise-linear nonlinearity needs at least two knots", "problem.nonlinearity");
        for (std::size_t k = 0; k < knots.size(); ++k) {
            if (!std::isfinite(knots[k].first) || !std::isfinite(knots[k].second))
                throw ConfigError("non-finite knot", "problem.nonlinearity");
            if (k > 0) {
                const bool ok = strict ? knots[k].first > knots[k - 1].first
                                       : knots[k].first >= knots[k - 1].first;
                if (!ok)
                    throw ConfigError(strict ? "tabulated abscissae must be strictly increasing"
                                             : "knot abscissae must be nondecreasing",
                                      "problem.nonlinearity");
                if (knots[k].second < knots[k - 1].second)
                    throw ConfigError("nonlinearity must be nondecreasing", "problem.nonlinearity");
                if (!strict && k > 1 && knots[k].first == knots[k - 1].first &&
                    knots[k - 1].first == knots[k - 2].first)
                    throw ConfigError("at most two knots may share an abscissa", "problem.nonlinearity");
            }
        }
        if (knots.front().first == knots[1].first || knots.back().first == knots[knots.size() - 2].first)
            throw ConfigError("the first and last knots must not be jumps", "problem.nonlinearity");
        knots_ = knots;

        segments_.clear();
        const double inf = std::numeric_limits<double>::infinity();
        const double first_slope = (knots[1].second - knots[0].second) / (knots[1].first - knots[0].first);
        segments_.push_back({-inf, knots[0].first, knots[0].second, first_slope});
        // Rewrite the left extrapolation so eval(s) = alpha_0 + slope (s - s_0).
        segments_.back().lo = knots[0].first;
        for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
            if (knots[k + 1].first == knots[k].first)
                continue;
            const double slope = (knots[k + 1].second - knots[k].second) / (knots[k + 1].first - knots[k].first);
            segments_.push_back({knots[k].first, knots[k + 1].first, knots[k].second, slope});
        }
        const auto& last = knots.back();
        const auto& before = knots[knots.size() - 2];
        const double last_slope = (last.second - before.second) / (last.first - before.first);
        segments_.push_back({last.first, inf, last.second, last_slope});

        zero_offset_ = 0.0;
        zero_offset_ = integral_from_first_knot(0.0);
        for (double s : {-1.0, -1e-3, 1e-3, 1.0}) {
            if (s * base_alpha(s) < 0.0)
                throw ConfigError("nonlinearity must satisfy s*alpha(s) >= 0 so that A >= 0 with A(0) = 0",
                                  "problem.nonlinearity");
        }
    }

    Kind kind_ = Kind::power;
    double p_ = 2.0;
    double shift_ = 0.0;
    double zero_offset_ = 0.0;
    std::vector<std::pair<double, double>> knots_;
    std::vector<Segment> segments_;
};

/// Constants realising the growth bounds c|s|^p - 1/c <= A(s) and
/// |alpha(s)|^{p'} <= C(|s|^p + 1) on sampled points.
struct GrowthConstants {
    double lower_c = 0.0;
    double upper_C = 0.0;
};

inline GrowthConstants nonlinearity_growth_constants(const Nonlinearity& nl, std::span<const double> samples)
{
    const double p = nl.p();
    const double q = conjugate_exponent(p);
    GrowthConstants g;
    for (double s : samples)
        g.upper_C = std::max(g.upper_C, std::pow(std::abs(nl(s)), q) / (std::pow(std::abs(s), p) + 1.0));
    auto holds = [&](double c) {
        for (double s : samples)
            if (c * std::pow(std::abs(s), p) - 1.0 / c > nl.primitive(s) + 1e-12 * (1.0 + std::abs(nl.primitive(s))))
                return false;
        return true;
    };
    double lo = 1e-12, hi = 1e6;
    if (!holds(lo))
        return g;
    for (int it = 0; it < 200; ++it) {
        const double mid = std::sqrt(lo * hi);
        if (holds(mid))
            lo = mid;
        else
            hi = mid;
        if (hi / lo < 1.0 + 1e-12)
            break;
    }
    g.lower_c = lo;
    return g;
}

} // namespace dnp
