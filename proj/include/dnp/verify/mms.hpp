#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "dnp/cascade.hpp"
#include "dnp/error.hpp"
#include "dnp/parallel.hpp"
#include "dnp/problem.hpp"
#include "dnp/trajectory.hpp"

namespace dnp {

/// A closed-form u*(x, t), T-periodic in t and zero at x = 0, L, together
/// with its partial derivatives (used by the continuum forcing).
struct MmsSpec {
    std::string name;
    std::function<double(double, double)> u;
    std::function<double(double, double)> u_t;
    std::function<double(double, double)> u_x;
};

/// Built-ins: "zero", "sine_product" = sin(pi x/L) sin(2 pi t/T),
/// "offset_sine" = sin(pi x/L)(1 + sin(2 pi t/T)/2).
inline MmsSpec builtin_mms(const std::string& name, double L, double T)
{
    const double kx = std::numbers::pi / L, kt = 2.0 * std::numbers::pi / T;
    MmsSpec s;
    s.name = name;
    if (name == "zero") {
        s.u = s.u_t = s.u_x = [](double, double) { return 0.0; };
    } else if (name == "sine_product") {
        s.u = [=](double x, double t) { return std::sin(kx * x) * std::sin(kt * t); };
        s.u_t = [=](double x, double t) { return kt * std::sin(kx * x) * std::cos(kt * t); };
        s.u_x = [=](double x, double t) { return kx * std::cos(kx * x) * std::sin(kt * t); };
    } else if (name == "offset_sine") {
        s.u = [=](double x, double t) { return std::sin(kx * x) * (1.0 + 0.5 * std::sin(kt * t)); };
        s.u_t = [=](double x, double t) { return 0.5 * kt * std::sin(kx * x) * std::cos(kt * t); };
        s.u_x = [=](double x, double t) { return kx * std::cos(kx * x) * (1.0 + 0.5 * std::sin(kt * t)); };
    } else {
        throw ConfigError("unknown manufactured solution '" + name + "'", "mms.solution");
    }
    return s;
}

inline PeriodicTrajectory sample_exact(const MmsSpec& mms, const SpatialMesh& smesh, const TemporalMesh& tmesh)
{
    PeriodicTrajectory u(tmesh.size(), smesh.size());
    for (std::size_t n = 0; n < tmesh.size(); ++n)
        for (std::size_t i = 0; i < smesh.size(); ++i)
            u(n, i) = mms.u(smesh.node(i), tmesh.time(n));
    return u;
}

/// f = alpha(D_t u*) + grad phi(u*) with the solver's own discrete operators,
/// so u* solves the discrete problem exactly.
inline DualTrajectory discrete_exact_forcing(const PeriodicTrajectory& ustar, const ProblemSpec& spec, double delta)
{
    DualTrajectory f = xi_of(ustar, spec);
    f += eta_of(ustar, spec, delta);
    return f;
}

/// f(x, t) = alpha(u*_t) - d/dx[a(x) q(u*_x)] sampled at the nodes, with q the
/// smoothed flux and the outer derivative taken by a central difference of
/// the analytic flux (step 1e-5 L).
inline DualTrajectory continuum_forcing(const MmsSpec& mms, const ProblemSpec& spec, double delta,
                                        const std::function<double(double)>& a)
{
    const double h = 1e-5 * spec.smesh.length();
    auto flux = [&](double x, double t) { return a(x) * detail::smoothed_flux(mms.u_x(x, t), spec.m, delta); };
    DualTrajectory f(spec.tmesh.size(), spec.smesh.size());
    for (std::size_t n = 0; n < spec.tmesh.size(); ++n) {
        const double t = spec.tmesh.time(n);
        for (std::size_t i = 0; i < spec.smesh.size(); ++i) {
            const double x = spec.smesh.node(i);
            f(n, i) = spec.nl(mms.u_t(x, t)) - (flux(x + h, t) - flux(x - h, t)) / (2.0 * h);
        }
    }
    return f;
}

struct MmsLevel {
    std::size_t M = 0;
    std::size_t N = 0;
    double dx = 0.0;
    double dt = 0.0;
    double error = 0.0;         // max_n |u_n - u*_n|_V
    double self_difference = 0.0; // vs the previous (coarser) level on shared grid points
    double residual = 0.0;
    double seconds = 0.0;
    bool converged = false;
    std::string route;
};

struct MmsTable {
    std::string mode;  // "discrete" or "continuum"
    std::string sweep; // "time", "space" or "none"
    std::vector<MmsLevel> levels;
    /// Observed orders from successive self-differences (three or more levels).
    std::vector<double> orders;
};

/// Problem on the given grid with the forcing replaced according to `mode`.
inline ProblemSpec mms_problem(const MmsSpec& mms, const ProblemSpec& base, std::size_t M, std::size_t N,
                               const std::string& mode, double delta)
{
    SpatialMesh smesh(base.smesh.length(), M);
    TemporalMesh tmesh(base.tmesh.period(), N);
    std::vector<double> a(smesh.cells());
    const bool uniform = std::all_of(base.a.values().begin(), base.a.values().end(),
                                     [&](double v) { return v == base.a[0]; });
    if (!uniform && base.a.cells() != smesh.cells())
        throw ConfigError("manufactured-solution refinement needs a uniform diffusion field", "problem.diffusion");
    for (std::size_t j = 0; j < a.size(); ++j)
        a[j] = uniform ? base.a[0] : base.a[j];
    ProblemSpec spec{base.p, base.m, base.nl, DiffusionField(a), DualTrajectory(N, M), smesh, tmesh};
    if (mode == "discrete") {
        spec.f = discrete_exact_forcing(sample_exact(mms, smesh, tmesh), spec, delta);
    } else if (mode == "continuum") {
        const double a0 = a[0];
        spec.f = continuum_forcing(mms, spec, delta, [a0](double) { return a0; });
    } else {
        throw ConfigError("mode must be 'discrete' or 'continuum'", "mms.mode");
    }
    return spec;
}

inline double max_slice_distance(const PeriodicTrajectory& u, const PeriodicTrajectory& v, double p,
                                 const SpatialMesh& smesh)
{
    PeriodicTrajectory d = u - v;
    double e = 0.0;
    for (std::size_t n = 0; n < d.steps(); ++n)
        e = std::max(e, norm_V(d.slice(n), p, smesh));
    return e;
}

/// Restriction of a fine trajectory onto a coarse grid whose nodes and
/// time levels are a subset (M_f + 1 = k (M_c + 1), N_f = l N_c).
inline PeriodicTrajectory restrict_to(const PeriodicTrajectory& fine, std::size_t Mc, std::size_t Nc)
{
    const std::size_t Mf = fine.nodes(), Nf = fine.steps();
    if ((Mf + 1) % (Mc + 1) != 0 || Nf % Nc != 0)
        throw InvalidInput("grids are not nested");
    const std::size_t kx = (Mf + 1) / (Mc + 1), kt = Nf / Nc;
    PeriodicTrajectory c(Nc, Mc);
    for (std::size_t n = 0; n < Nc; ++n)
        for (std::size_t i = 0; i < Mc; ++i)
            c(n, i) = fine(n * kt, (i + 1) * kx - 1);
    return c;
}

/// Solves the manufactured problem on each (M, N) level and tabulates the
/// error against u*. Levels are expected nested; self-differences between
/// consecutive levels give the observed orders:
/// order_k = log2(d_k / d_{k+1}) for refinement ratio 2.
inline MmsTable mms_run(const MmsSpec& mms, const ProblemSpec& base, const CascadeParams& params,
                        const std::vector<std::pair<std::size_t, std::size_t>>& levels, const std::string& mode,
                        std::size_t jobs = 1)
{
    MmsTable table;
    table.mode = mode;
    table.sweep = "none";
    if (levels.size() >= 2) {
        const bool dM = levels[0].first != levels[1].first, dN = levels[0].second != levels[1].second;
        table.sweep = dM && !dN ? "space" : (!dM && dN ? "time" : "both");
    }
    std::vector<ProblemSpec> specs;
    for (const auto& [M, N] : levels)
        specs.push_back(mms_problem(mms, base, M, N, mode, params.delta));
    std::vector<PeriodicTrajectory> sols(levels.size());
    table.levels.resize(levels.size());
    parallel_for(levels.size(), jobs, [&](std::size_t k) {
        const ProblemSpec& spec = specs[k];
        const auto t0 = std::chrono::steady_clock::now();
        StageResult r = solve(spec, params);
        MmsLevel& lv = table.levels[k];
        lv.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        lv.M = levels[k].first;
        lv.N = levels[k].second;
        lv.dx = spec.smesh.dx();
        lv.dt = spec.tmesh.dt();
        lv.converged = r.report.converged;
        lv.residual = r.report.final_residual;
        lv.route = r.report.route;
        lv.error = max_slice_distance(r.u, sample_exact(mms, spec.smesh, spec.tmesh), spec.p, spec.smesh);
        sols[k] = std::move(r.u);
    });
    for (std::size_t k = 1; k < levels.size(); ++k) {
        const PeriodicTrajectory& prev = sols[k - 1];
        const PeriodicTrajectory rc = restrict_to(sols[k], prev.nodes(), prev.steps());
        const SpatialMesh coarse(base.smesh.length(), prev.nodes());
        table.levels[k].self_difference = max_slice_distance(rc, prev, base.p, coarse);
    }
    for (std::size_t k = 2; k < table.levels.size(); ++k) {
        const double a = table.levels[k - 1].self_difference, b = table.levels[k].self_difference;
        const double ratio = table.sweep == "space"
                                 ? table.levels[k - 1].dx / table.levels[k].dx
                                 : table.levels[k - 1].dt / table.levels[k].dt;
        table.orders.push_back(a > 0.0 && b > 0.0 ? std::log(a / b) / std::log(ratio) : 0.0);
    }
    return table;
}

} // namespace dnp
