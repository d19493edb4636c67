#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "dnp/cascade.hpp"
#include "dnp/convex.hpp"
#include "dnp/problem.hpp"
#include "dnp/variational.hpp"

namespace dnp {

/// One check: passes when lower <= value <= upper.
struct InvariantCheck {
    std::string name;
    double value = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    bool passed = false;
};

struct InvariantReport {
    std::vector<InvariantCheck> checks;
    bool all_passed = true;

    const InvariantCheck* find(const std::string& name) const
    {
        for (const auto& c : checks)
            if (c.name == name)
                return &c;
        return nullptr;
    }
};

struct InvariantOptions {
    double stage_tol = 1e-8;
    double delta = 1e-6;
    std::vector<double> lambdas{1.0, 0.1, 0.01};
    std::size_t yosida_slices = 4;
};

namespace detail {

inline void add_check(InvariantReport& rep, std::string name, double value, double lower, double upper)
{
    InvariantCheck c{std::move(name), value, lower, upper, value >= lower && value <= upper && std::isfinite(value)};
    rep.all_passed = rep.all_passed && c.passed;
    rep.checks.push_back(std::move(c));
}

} // namespace detail

/// Evaluates the structural identities and inequalities a converged solution
/// must satisfy. Checks whose name starts with "yosida"/"duality" act on
/// individual slices; the rest on the whole trajectory. `stages` may be empty
/// (e.g. for a corrupted trajectory).
inline InvariantReport invariant_suite(const PeriodicTrajectory& u, const ProblemSpec& spec,
                                       const std::vector<StageRecord>& stages, const InvariantOptions& opt = {})
{
    InvariantReport rep;
    const double p = spec.p, q = conjugate_exponent(p), dt = spec.tmesh.dt();
    const std::size_t N = spec.tmesh.size();
    const SpatialMesh& mesh = spec.smesh;
    const DualTrajectory xi = xi_of(u, spec);
    const DualTrajectory eta = eta_of(u, spec, opt.delta);
    const PeriodicTrajectory du = time_derivative(u, spec.tmesh);
    const double fnorm = lebesgue_bochner_norm(spec.f, q, q, mesh, spec.tmesh);
    const double fscale = std::max(1.0, fnorm);

    // Stationarity of the limit equation.
    detail::add_check(rep, "stationarity", residual_AP(u, eta, spec), 0.0, 10.0 * opt.stage_tol * fscale);

    // Energy inequality  sum dt <alpha(u'), u'> - sum dt <f, u'> <= tol.
    {
        const double lhs = space_time_pairing(xi, du, mesh, spec.tmesh) - space_time_pairing(spec.f, du, mesh, spec.tmesh);
        const double scale = std::max(1.0, fnorm * lebesgue_bochner_norm(du, p, p, mesh, spec.tmesh));
        detail::add_check(rep, "energy_inequality", lhs, -std::numeric_limits<double>::infinity(), 1e-8 * scale);
    }

    // Period loop: 0 <= sum dt <eta_n, u'_n> <= sum <eta_n - eta_{n-1}, u_n - u_{n-1}>
    // by convexity of phi and phi(u_N) = phi(u_0).
    {
        double loop = 0.0, bound = 0.0, mag = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
            const std::size_t pv = spec.tmesh.prev(n);
            for (std::size_t i = 0; i < mesh.size(); ++i) {
                const double step = u(n, i) - u(pv, i);
                loop += mesh.dx() * eta(n, i) * step;
                bound += mesh.dx() * (eta(n, i) - eta(pv, i)) * step;
                mag += mesh.dx() * std::abs(eta(n, i) * step);
            }
        }
        const double slack = 1e-12 * std::max(1.0, mag);
        detail::add_check(rep, "period_loop", loop, -slack, bound + slack);
    }

    // Legendre-Fenchel over every window (n1, n2]:
    //   0 <= sum <xi_n - xi_{n-1}, u'_n> - (psi*(xi_n2) - psi*(xi_n1)) <= sum <dxi, du'>.
    // psi*(xi_n) = <xi_n, u'_n> - psi(u'_n) since xi_n = alpha(u'_n).
    {
        std::vector<double> star(N), inc(N), curv(N);
        double mag = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
            star[n] = pairing(xi.slice(n), du.slice(n), mesh) - eval_psi(du.slice(n), spec.nl, mesh);
            mag = std::max(mag, std::abs(star[n]));
        }
        for (std::size_t n = 0; n < N; ++n) {
            const std::size_t pv = spec.tmesh.prev(n);
            double a = 0.0, b = 0.0;
            for (std::size_t i = 0; i < mesh.size(); ++i) {
                a += mesh.dx() * (xi(n, i) - xi(pv, i)) * du(n, i);
                b += mesh.dx() * (xi(n, i) - xi(pv, i)) * (du(n, i) - du(pv, i));
            }
            inc[n] = a;
            curv[n] = b;
        }
        double worst = 0.0; // most negative normalized violation
        for (std::size_t n1 = 0; n1 < N; ++n1) {
            double s = 0.0, c = 0.0;
            for (std::size_t len = 1; len <= N; ++len) {
                const std::size_t n = (n1 + len) % N;
                s += inc[n];
                c += curv[n];
                const double gap = s - (star[n] - star[n1]);
                const double slack = 1e-11 * std::max(1.0, mag);
                const double below = gap + slack;      // must be >= 0
                const double above = c + slack - gap;  // must be >= 0
                worst = std::min({worst, below, above});
            }
        }
        detail::add_check(rep, "legendre_fenchel", worst, 0.0, std::numeric_limits<double>::infinity());
    }

    // Fenchel-Young equality with the numerically computed conjugate.
    {
        double worst = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
            const double lhs = fenchel_psi_star(xi.slice(n), spec.nl, mesh).value + eval_psi(du.slice(n), spec.nl, mesh);
            const double rhs = pairing(xi.slice(n), du.slice(n), mesh);
            worst = std::max(worst, std::abs(lhs - rhs) / std::max(1.0, std::abs(rhs)));
        }
        detail::add_check(rep, "fenchel_young", worst, 0.0, 1e-8);
    }

    // Duality map and Yosida sandwich phi(J u) <= phi_lambda(u) <= phi(u) on a few slices.
    {
        const DiffusionEnergy energy = make_energy(spec, opt.delta);
        const std::size_t count = std::min(opt.yosida_slices, N);
        double dual_err = 0.0, sandwich = 0.0, monotone = 0.0;
        for (std::size_t k = 0; k < count; ++k) {
            const std::size_t n = k * N / count;
            const auto s = u.slice(n);
            const Field F = duality_map(s, p, mesh);
            const double un = norm_V(s, p, mesh);
            const double ref = std::max(1e-300, un * un);
            dual_err = std::max({dual_err, std::abs(pairing(F, s, mesh) - un * un) / std::max(1.0, ref),
                                 std::abs(norm_Vstar(F, q, mesh) - un) / std::max(1.0, un)});
            const double phi_u = energy.value(s);
            double prev_env = -std::numeric_limits<double>::infinity();
            std::vector<double> lams = opt.lambdas;
            std::sort(lams.begin(), lams.end(), std::greater<>());
            for (double lam : lams) {
                const MoreauYosida my = moreau_yosida(s, lam, energy, p, mesh);
                const double tol = 1e-10 * std::max(1.0, phi_u);
                const double phi_j = energy.value(my.resolvent);
                sandwich = std::min({sandwich, my.envelope - phi_j + tol, phi_u - my.envelope + tol});
                // lambda decreasing -> envelope nondecreasing
                monotone = std::min(monotone, my.envelope - prev_env + tol);
                prev_env = my.envelope;
            }
        }
        detail::add_check(rep, "duality_map", dual_err, 0.0, 1e-10);
        detail::add_check(rep, "yosida_sandwich", sandwich, 0.0, std::numeric_limits<double>::infinity());
        detail::add_check(rep, "yosida_monotone", monotone, 0.0, std::numeric_limits<double>::infinity());
    }

    // Stage-wise properties of the cascade that produced u.
    if (!stages.empty()) {
        double worst_margin = -std::numeric_limits<double>::infinity();
        bool fp_monotone = true;
        double first = 0.0, peak = 0.0;
        for (const StageRecord& s : stages) {
            if (s.converged)
                worst_margin = std::max(worst_margin, s.energy_margin / (1e-8 * s.energy_scale));
            for (std::size_t k = 1; k < s.fp_history.size(); ++k)
                fp_monotone = fp_monotone && s.fp_history[k] <= s.fp_history[k - 1];
            const double b = std::max({s.apriori.derivative_bound, s.apriori.elliptic_bound,
                                       s.apriori.sobolev_bound, s.apriori.dual_bound});
            if (first == 0.0)
                first = b;
            peak = std::isfinite(b) ? std::max(peak, b) : std::numeric_limits<double>::infinity();
        }
        detail::add_check(rep, "stage_energy_margin", worst_margin, -std::numeric_limits<double>::infinity(), 1.0);
        detail::add_check(rep, "fixed_point_monotone", fp_monotone ? 0.0 : 1.0, 0.0, 0.0);
        // Uniform-in-epsilon bounds: no growth beyond a factor 100 over the first stage.
        detail::add_check(rep, "apriori_bounded", peak / std::max(1.0, first), 0.0, 100.0);
    }
    return rep;
}

inline InvariantReport invariant_suite(const StageResult& result, const ProblemSpec& spec,
                                       const InvariantOptions& opt = {})
{
    return invariant_suite(result.u, spec, result.report.stages, opt);
}

/// u + amplitude * U(-1, 1) noise at every node, from the given seed.
inline PeriodicTrajectory corrupt(const PeriodicTrajectory& u, double amplitude, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    PeriodicTrajectory out = u;
    for (double& x : out.raw())
        x += amplitude * uni(rng);
    return out;
}

} // namespace dnp
