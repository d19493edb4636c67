#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "dnp/convex.hpp"
#include "dnp/diffusion.hpp"
#include "dnp/problem.hpp"

namespace dnp {

/// Dual norm of xi in the discrete W^{1,m}_0 space normed by |Dv|_m:
///   min_c |S - c|_{m'} over the cells, S_j = sum_{i >= j} dx xi_i,
/// since <xi, v> = sum_j dx S_j (Dv)_j and Dv ranges over zero-mean cell vectors.
inline double norm_Xstar(std::span<const double> xi, double m, const SpatialMesh& mesh)
{
    const double q = conjugate_exponent(m);
    const double dx = mesh.dx();
    std::vector<double> S(mesh.cells(), 0.0);
    for (std::size_t j = xi.size(); j-- > 0;)
        S[j] = S[j + 1] + dx * xi[j];
    auto slope = [&](double c) {
        double s = 0.0;
        for (double v : S) {
            const double d = v - c;
            s += std::pow(std::abs(d), q - 1.0) * (d < 0 ? -1.0 : 1.0);
        }
        return s; // decreasing in c
    };
    double lo = *std::min_element(S.begin(), S.end()), hi = *std::max_element(S.begin(), S.end());
    for (int k = 0; k < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(hi)); ++k) {
        const double mid = 0.5 * (lo + hi);
        (slope(mid) > 0.0 ? lo : hi) = mid;
    }
    const double c = 0.5 * (lo + hi);
    std::vector<double> shifted(S.size());
    for (std::size_t j = 0; j < S.size(); ++j)
        shifted[j] = S[j] - c;
    double s = 0.0;
    for (double v : shifted)
        s += dx * std::pow(std::abs(v), q);
    return std::pow(s, 1.0 / q);
}

struct GrowthInequality {
    std::string name;
    std::string statement;
    std::vector<double> per_decade; // realized constant, one per magnitude
    double constant = 0.0;          // max over all samples
    bool finite = true;
};

struct GrowthReport {
    std::vector<double> magnitudes;
    std::vector<GrowthInequality> inequalities;
    bool all_finite = true;
};

/// Realized constants C = max lhs / max(rhs, 1) of the structural
/// inequalities lhs <= C (rhs + 1) for psi (exponent p, space V = L^p) and phi
/// (exponent m, space X with |Du|_m) on random fields at magnitudes
/// 10^-2 .. 10^2. Any such C satisfies the inequality on the samples, and for
/// homogeneous data it equals the homogeneity ratio exactly. phi is evaluated
/// unsmoothed.
inline GrowthReport growth_audit(const ProblemSpec& spec, std::size_t sample_count, std::uint64_t seed = 0)
{
    const double p = spec.p, m = spec.m;
    const double pc = conjugate_exponent(p), mc = conjugate_exponent(m);
    const SpatialMesh& mesh = spec.smesh;

    GrowthReport rep;
    rep.magnitudes = {1e-2, 1e-1, 1.0, 1e1, 1e2};
    const std::array<std::pair<const char*, const char*>, 10> names{{
        {"A1", "|u|_V^p <= C (psi(u) + 1)"},
        {"A2", "|dpsi(u)|_V*^p' <= C (|u|_V^p + 1)"},
        {"A3", "|u|_X^m <= C (phi(u) + 1)"},
        {"A4", "|eta|_X*^m' <= C (|u|_X^m + 1)"},
        {"A5", "|dpsi(u)|_V*^p' <= C (psi(u) + 1)"},
        {"A6", "psi(u) <= C (|u|_V^p + 1)"},
        {"AW1", "|u|_V^p <= C (|dpsi(u)|_V*^p' + 1)"},
        {"A7", "|eta|_X*^m' <= C (phi(u) + 1)"},
        {"A8", "phi(u) <= C (|u|_X^m + 1)"},
        {"AW2", "|u|_X^m <= C (|eta|_X*^m' + 1)"},
    }};
    for (const auto& [n, s] : names)
        rep.inequalities.push_back({n, s, std::vector<double>(rep.magnitudes.size(), 0.0), 0.0, true});

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    Field u(mesh.size());
    for (std::size_t d = 0; d < rep.magnitudes.size(); ++d) {
        for (std::size_t k = 0; k < sample_count; ++k) {
            for (double& x : u)
                x = rep.magnitudes[d] * uni(rng);
            const double up = std::pow(norm_V(u, p, mesh), p);
            const double ps = eval_psi(u, spec.nl, mesh);
            const double dp = std::pow(norm_Vstar(grad_psi(u, spec.nl), pc, mesh), pc);
            const double ux = std::pow(norm_X(u, m, mesh), m);
            const double ph = eval_phi(u, spec.a, m, 0.0, mesh);
            const double et = std::pow(norm_Xstar(grad_phi(u, spec.a, m, 0.0, mesh), m, mesh), mc);
            auto r = [](double lhs, double rhs) { return lhs / std::max(rhs, 1.0); };
            const std::array<double, 10> ratio{
                r(up, ps), r(dp, up), r(ux, ph), r(et, ux), r(dp, ps),
                r(ps, up), r(up, dp), r(et, ph), r(ph, ux), r(ux, et),
            };
            for (std::size_t j = 0; j < ratio.size(); ++j) {
                GrowthInequality& g = rep.inequalities[j];
                g.per_decade[d] = std::max(g.per_decade[d], ratio[j]);
                g.constant = std::max(g.constant, ratio[j]);
                g.finite = g.finite && std::isfinite(ratio[j]);
            }
        }
    }
    for (const GrowthInequality& g : rep.inequalities)
        rep.all_finite = rep.all_finite && g.finite;
    return rep;
}

} // namespace dnp
