#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "dnp/convex.hpp"
#include "dnp/diffusion.hpp"
#include "dnp/error.hpp"
#include "dnp/mesh.hpp"
#include "dnp/problem.hpp"
#include "dnp/trajectory.hpp"

namespace dnp {

/// Parameters of the regularized space-time functional
///   I(u) = sum_n dt [ phi_l(u_n) + eps psi(u'_n) + eps psi(u_n) + eps/2 |u_n|_V^2 - <g_n, u_n> ]
/// with g = f + h. lambda = 0 uses the smoothed phi itself.
struct ObjectiveConfig {
    double epsilon = 1.0;
    double lambda = 0.0;
    DualTrajectory f_plus_h;
    double delta = 1e-6;
    std::optional<PerturbedFunctional> perturbation;

    bool use_envelope() const noexcept { return lambda > 0.0; }

    void validate(const ProblemSpec& spec) const
    {
        if (!(epsilon > 0.0) || !std::isfinite(epsilon))
            throw ConfigError("epsilon must be positive", "cascade.epsilon_schedule");
        if (!(lambda >= 0.0) || !std::isfinite(lambda))
            throw ConfigError("lambda must be nonnegative", "cascade.lambda_schedule");
        if (!(delta >= 0.0))
            throw ConfigError("gradient smoothing must be >= 0", "cascade.delta");
        require_shape(f_plus_h, spec.smesh, spec.tmesh, "forcing");
        require_finite(f_plus_h.raw(), "forcing");
    }
};

struct MinimizerReport {
    int iterations = 0;
    double final_gradient_norm = 0.0;
    double objective_value = 0.0;
    int line_search_failures = 0;
    int gradient_steps = 0;
    bool converged = false;
};

struct MinimizeResult {
    PeriodicTrajectory u;
    MinimizerReport report;
};

inline DiffusionEnergy make_energy(const ProblemSpec& spec, double delta,
                                   const std::optional<PerturbedFunctional>& pf = std::nullopt)
{
    return DiffusionEnergy(spec.a, spec.m, delta, spec.smesh, pf);
}

/// xi_n = alpha(u'_n).
inline DualTrajectory xi_of(const PeriodicTrajectory& u, const ProblemSpec& spec)
{
    const PeriodicTrajectory du = time_derivative(u, spec.tmesh);
    DualTrajectory xi(u.steps(), u.nodes());
    for (std::size_t k = 0; k < du.raw().size(); ++k)
        xi.raw()[k] = spec.nl(du.raw()[k]);
    return xi;
}

/// eta_n = grad phi(u_n) (delta-smoothed, unperturbed).
inline DualTrajectory eta_of(const PeriodicTrajectory& u, const ProblemSpec& spec, double delta)
{
    DualTrajectory eta(u.steps(), u.nodes());
    for (std::size_t n = 0; n < u.steps(); ++n) {
        const Field g = grad_phi(u.slice(n), spec.a, spec.m, delta, spec.smesh);
        std::copy(g.begin(), g.end(), eta.slice(n).begin());
    }
    return eta;
}

/// L^{p'}(0,T; V*) norm of alpha(u'_n) + eta_n - f_n.
inline double residual_AP(const PeriodicTrajectory& u, const DualTrajectory& eta, const ProblemSpec& spec)
{
    require_shape(u, spec.smesh, spec.tmesh, "trajectory");
    require_shape(eta, spec.smesh, spec.tmesh, "eta");
    DualTrajectory r = xi_of(u, spec);
    r += eta;
    r -= spec.f;
    const double q = conjugate_exponent(spec.p);
    return lebesgue_bochner_norm(r, q, q, spec.smesh, spec.tmesh);
}

namespace detail {

/// Evaluates I and its pieces for one (config, problem) pair. Holds warm
/// starts for the per-slice resolvents when lambda > 0.
class ObjectiveEvaluator {
public:
    ObjectiveEvaluator(const ObjectiveConfig& cfg, const ProblemSpec& spec)
        : cfg_(cfg), spec_(spec), energy_(make_energy(spec, cfg.delta, cfg.perturbation))
    {
        cfg.validate(spec);
    }

    const DiffusionEnergy& energy() const noexcept { return energy_; }

    std::optional<std::vector<Field>>& resolvent_cache() { return cache_; }

    double value(const PeriodicTrajectory& u)
    {
        const std::size_t N = u.steps();
        const double dt = spec_.tmesh.dt();
        const double eps = cfg_.epsilon;
        const PeriodicTrajectory du = time_derivative(u, spec_.tmesh);
        double total = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
            const auto un = u.slice(n);
            double e = 0.0;
            if (cfg_.use_envelope())
                e = envelope_at(n, un).envelope;
            else
                e = energy_.value(un);
            const double vn = norm_V(un, spec_.p, spec_.smesh);
            total += e + eps * eval_psi(du.slice(n), spec_.nl, spec_.smesh) + eps * eval_psi(un, spec_.nl, spec_.smesh) +
                     0.5 * eps * vn * vn - pairing(cfg_.f_plus_h.slice(n), un, spec_.smesh);
        }
        return dt * total;
    }

    /// Reduced gradient G_n (the objective gradient divided by dt).
    DualTrajectory reduced_gradient(const PeriodicTrajectory& u)
    {
        const std::size_t N = u.steps(), M = u.nodes();
        const double eps = cfg_.epsilon;
        const double dt = spec_.tmesh.dt();
        const DualTrajectory xi = xi_of(u, spec_);
        DualTrajectory G(N, M);
        for (std::size_t n = 0; n < N; ++n) {
            const auto un = u.slice(n);
            const Field ge = cfg_.use_envelope() ? envelope_at(n, un).yosida_grad : energy_.gradient(un);
            const Field fv = duality_map(un, spec_.p, spec_.smesh);
            const auto xn = xi.slice(n);
            const auto xnext = xi.slice(spec_.tmesh.next(n));
            const auto g = cfg_.f_plus_h.slice(n);
            auto out = G.slice(n);
            for (std::size_t i = 0; i < M; ++i)
                out[i] = -eps * (xnext[i] - xn[i]) / dt + eps * spec_.nl(un[i]) + eps * fv[i] + ge[i] - g[i];
        }
        return G;
    }

    /// Symmetric Newton matrix in reduced units. The rank-one parts of the
    /// duality-map and power-perturbation Jacobians are omitted; for lambda > 0
    /// the exact envelope blocks are used.
    Eigen::SparseMatrix<double> newton_matrix(const PeriodicTrajectory& u)
    {
        const std::size_t N = u.steps(), M = u.nodes();
        const double eps = cfg_.epsilon;
        const double dt = spec_.tmesh.dt();
        const PeriodicTrajectory du = time_derivative(u, spec_.tmesh);
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(N * M * (cfg_.use_envelope() ? M + 2 : 5));
        auto idx = [M](std::size_t n, std::size_t i) { return static_cast<int>(n * M + i); };
        for (std::size_t n = 0; n < N; ++n) {
            const auto un = u.slice(n);
            const std::size_t nx = spec_.tmesh.next(n);
            const DualityJacobian fj = duality_jacobian(un, spec_.p, spec_.smesh);
            if (cfg_.use_envelope()) {
                const MoreauYosida& my = envelope_at(n, un);
                const Eigen::MatrixXd B = envelope_hessian(un, my, cfg_.lambda, energy_, spec_.p, spec_.smesh);
                for (std::size_t i = 0; i < M; ++i)
                    for (std::size_t j = 0; j < M; ++j)
                        trip.emplace_back(idx(n, i), idx(n, j),
                                          B(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
            } else {
                const Tridiagonal t = energy_.curvature(un);
                for (std::size_t i = 0; i < M; ++i) {
                    trip.emplace_back(idx(n, i), idx(n, i), t.diag[i]);
                    if (i + 1 < M) {
                        trip.emplace_back(idx(n, i), idx(n, i + 1), t.off[i]);
                        trip.emplace_back(idx(n, i + 1), idx(n, i), t.off[i]);
                    }
                }
            }
            for (std::size_t i = 0; i < M; ++i) {
                const double c_here = eps * spec_.nl.derivative(du(n, i)) / (dt * dt);
                const double c_next = eps * spec_.nl.derivative(du(nx, i)) / (dt * dt);
                const double d = eps * spec_.nl.derivative(un[i]) + eps * fj.diag[i] + c_here + c_next;
                trip.emplace_back(idx(n, i), idx(n, i), d);
                trip.emplace_back(idx(n, i), idx(nx, i), -c_next);
                trip.emplace_back(idx(nx, i), idx(n, i), -c_next);
            }
        }
        Eigen::SparseMatrix<double> K(static_cast<Eigen::Index>(N * M), static_cast<Eigen::Index>(N * M));
        K.setFromTriplets(trip.begin(), trip.end());
        return K;
    }

private:
    const MoreauYosida& envelope_at(std::size_t n, std::span<const double> un)
    {
        // Memoised on the exact slice contents: the line search and the matrix
        // assembly revisit the same points.
        if (memo_.size() != spec_.tmesh.size()) {
            memo_.assign(spec_.tmesh.size(), {});
            memo_key_.assign(spec_.tmesh.size(), {});
        }
        if (memo_key_[n].size() == un.size() && std::equal(un.begin(), un.end(), memo_key_[n].begin()))
            return memo_[n];
        std::span<const double> start;
        if (cache_ && (*cache_)[n].size() == un.size())
            start = (*cache_)[n];
        memo_[n] = moreau_yosida(un, cfg_.lambda, energy_, spec_.p, spec_.smesh, 1e-13, start);
        memo_key_[n].assign(un.begin(), un.end());
        if (!cache_)
            cache_.emplace(spec_.tmesh.size());
        (*cache_)[n] = memo_[n].resolvent;
        return memo_[n];
    }

    const ObjectiveConfig& cfg_;
    const ProblemSpec& spec_;
    DiffusionEnergy energy_;
    std::optional<std::vector<Field>> cache_;
    std::vector<MoreauYosida> memo_;
    std::vector<Field> memo_key_;
};

inline double dual_bochner(const DualTrajectory& g, const ProblemSpec& spec)
{
    const double q = conjugate_exponent(spec.p);
    return lebesgue_bochner_norm(g, q, q, spec.smesh, spec.tmesh);
}

} // namespace detail

/// Reusable storage for repeated minimisations on one grid: the symbolic
/// factorisation of the Newton matrix.
struct NewtonWorkspace {
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver;
    bool analyzed = false;
    bool envelope_pattern = false;
    Eigen::Index rows = 0;
};

inline double assemble_objective(const PeriodicTrajectory& u, const ObjectiveConfig& cfg, const ProblemSpec& spec)
{
    require_shape(u, spec.smesh, spec.tmesh, "trajectory");
    detail::ObjectiveEvaluator ev(cfg, spec);
    return ev.value(u);
}

/// Gradient of assemble_objective with respect to the space-time pairing:
/// slice n = dt [ -eps (xi_{n+1} - xi_n)/dt + eps alpha(u_n) + grad phi_l(u_n) + eps F_V(u_n) - g_n ].
inline DualTrajectory objective_gradient(const PeriodicTrajectory& u, const ObjectiveConfig& cfg,
                                         const ProblemSpec& spec)
{
    require_shape(u, spec.smesh, spec.tmesh, "trajectory");
    detail::ObjectiveEvaluator ev(cfg, spec);
    DualTrajectory G = ev.reduced_gradient(u);
    G *= spec.tmesh.dt();
    return G;
}

/// Damped Newton with Armijo backtracking on I, falling back to the steepest
/// descent direction when the Newton direction is not a descent direction.
/// Stops when |G|_{L^{p'}(V*)} <= tol max(1, |f + h|).
inline MinimizeResult minimize(const ObjectiveConfig& cfg, const ProblemSpec& spec, const PeriodicTrajectory& u0,
                               double tol, int max_iter, NewtonWorkspace* workspace = nullptr)
{
    if (!(tol > 0.0))
        throw ConfigError("minimizer tolerance must be positive", "cascade.inner_tol");
    require_shape(u0, spec.smesh, spec.tmesh, "initial trajectory");
    detail::ObjectiveEvaluator ev(cfg, spec);
    NewtonWorkspace local;
    NewtonWorkspace& ws = workspace ? *workspace : local;

    const double dt = spec.tmesh.dt(), dx = spec.smesh.dx();
    const double ref = std::max(1.0, detail::dual_bochner(cfg.f_plus_h, spec));
    MinimizeResult res{u0, {}};
    PeriodicTrajectory& u = res.u;
    double fval = ev.value(u);
    DualTrajectory G = ev.reduced_gradient(u);
    double gnorm = detail::dual_bochner(G, spec);
    const auto total = static_cast<Eigen::Index>(u.raw().size());

    // After the tolerance is met up to two full Newton steps polish the
    // minimiser, kept only while each halves the gradient. On degenerate
    // slices (u_x ~ 0, m > 2) the curvature is tiny and a merely tolerance-
    // converged u depends on the start point; the fixed point on top of this
    // solve needs it reproducible.
    int polish = 0;
    for (res.report.iterations = 0; res.report.iterations < max_iter; ++res.report.iterations) {
        if (gnorm <= tol * ref) {
            res.report.converged = true;
            if (polish++ >= 2)
                break;
        }
        const bool polishing = res.report.converged;
        Eigen::SparseMatrix<double> K = ev.newton_matrix(u);
        if (!ws.analyzed || ws.rows != total || ws.envelope_pattern != cfg.use_envelope()) {
            ws.solver.analyzePattern(K);
            ws.analyzed = true;
            ws.rows = total;
            ws.envelope_pattern = cfg.use_envelope();
        }
        const Eigen::Map<const Eigen::VectorXd> g(G.raw().data(), total);
        Eigen::VectorXd step;
        double shift = 0.0;
        bool factored = false;
        for (int attempt = 0; attempt < 6 && !factored; ++attempt) {
            if (shift > 0.0) {
                Eigen::SparseMatrix<double> I(total, total);
                I.setIdentity();
                ws.solver.factorize(K + shift * I);
            } else {
                ws.solver.factorize(K);
            }
            factored = ws.solver.info() == Eigen::Success && (ws.solver.vectorD().array() > 0.0).all();
            if (factored) {
                step = -ws.solver.solve(g);
                factored = step.allFinite();
            }
            if (!factored) {
                const double dmax = K.diagonal().cwiseAbs().maxCoeff();
                shift = shift == 0.0 ? 1e-10 * std::max(dmax, 1e-300) : 100.0 * shift;
            }
        }
        double slope = factored ? dt * dx * g.dot(step) : 0.0;
        if (polishing) {
            if (!factored)
                break;
            PeriodicTrajectory trial = u;
            for (Eigen::Index k = 0; k < total; ++k)
                trial.raw()[static_cast<std::size_t>(k)] += step[k];
            DualTrajectory Gt;
            double ft = 0.0;
            try {
                ft = ev.value(trial);
                Gt = ev.reduced_gradient(trial);
            } catch (const SolverFailure&) {
                break;
            }
            const double gt_norm = detail::dual_bochner(Gt, spec);
            if (!(gt_norm < 0.5 * gnorm))
                break;
            u = std::move(trial);
            fval = ft;
            G = std::move(Gt);
            gnorm = gt_norm;
            continue;
        }
        if (!factored || !(slope < 0.0)) {
            step = -g / std::max(1.0, g.cwiseAbs().maxCoeff());
            slope = dt * dx * g.dot(step);
            ++res.report.gradient_steps;
        }

        double t = 1.0;
        bool accepted = false;
        PeriodicTrajectory trial = u;
        DualTrajectory Gt;
        double ft = fval, gt_norm = gnorm;
        for (int ls = 0; ls < 50; ++ls) {
            for (Eigen::Index k = 0; k < total; ++k)
                trial.raw()[static_cast<std::size_t>(k)] = u.raw()[static_cast<std::size_t>(k)] + t * step[k];
            try {
                ft = ev.value(trial);
            } catch (const SolverFailure&) {
                ft = std::numeric_limits<double>::infinity();
            }
            if (std::isfinite(ft) && ft <= fval + 1e-4 * t * slope) {
                // Far less gain than the quadratic model predicts: the Newton
                // cycle of |z|^m with m < 2. Halve while the objective improves.
                if (ft > fval + 0.25 * t * slope) {
                    PeriodicTrajectory half = u;
                    while (t > 1e-6) {
                        for (Eigen::Index k = 0; k < total; ++k)
                            half.raw()[static_cast<std::size_t>(k)] =
                                u.raw()[static_cast<std::size_t>(k)] + 0.5 * t * step[k];
                        double fh = std::numeric_limits<double>::infinity();
                        try {
                            fh = ev.value(half);
                        } catch (const SolverFailure&) {
                        }
                        if (!(fh < ft))
                            break;
                        ft = fh;
                        t *= 0.5;
                        trial = half;
                    }
                }
                accepted = true;
                Gt = ev.reduced_gradient(trial);
                gt_norm = detail::dual_bochner(Gt, spec);
                break;
            }
            // Near the minimiser the objective decrease drowns in roundoff; a
            // full step that does not raise I beyond that level and reduces
            // the gradient is taken instead.
            if (ls == 0 && std::isfinite(ft) && ft - fval <= 1e-13 * (std::abs(fval) + ref)) {
                Gt = ev.reduced_gradient(trial);
                gt_norm = detail::dual_bochner(Gt, spec);
                if (gt_norm < gnorm) {
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if (!accepted) {
            ++res.report.line_search_failures;
            break;
        }
        u = std::move(trial);
        fval = ft;
        G = std::move(Gt);
        gnorm = gt_norm;
    }
    if (!res.report.converged && gnorm <= tol * ref)
        res.report.converged = true;
    res.report.final_gradient_norm = gnorm;
    res.report.objective_value = fval;
    return res;
}

} // namespace dnp
