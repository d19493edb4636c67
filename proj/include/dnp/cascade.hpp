#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Sparse>

#include "dnp/anderson.hpp"
#include "dnp/convex.hpp"
#include "dnp/diffusion.hpp"
#include "dnp/error.hpp"
#include "dnp/problem.hpp"
#include "dnp/trajectory.hpp"
#include "dnp/variational.hpp"

namespace dnp {

inline std::vector<double> geometric_schedule(double first, double ratio, double last)
{
    if (!(first > 0.0) || !(ratio > 0.0 && ratio < 1.0) || !(last > 0.0) || last > first)
        throw ConfigError("invalid geometric schedule");
    std::vector<double> s;
    for (double v = first; v >= last * (1.0 - 1e-12); v *= ratio)
        s.push_back(v);
    return s;
}

/// Every knob of the regularization cascade.
struct CascadeParams {
    std::vector<double> epsilon_schedule = geometric_schedule(1.0, 0.1, 1e-12);
    /// Positive values only; the lambda = 0 mode always follows.
    std::vector<double> lambda_schedule = {1e-1, 1e-2};
    std::vector<double> mu_schedule = geometric_schedule(1e-1, 0.1, 1e-12);
    /// Perturbation exponent; NaN selects p/m, which exceeds p/m - 1.
    double alpha_exp = std::numeric_limits<double>::quiet_NaN();
    double delta = 1e-6;
    double omega = 0.5;
    int anderson_depth = 10;
    /// Try a linearized Newton step on h - beta(h) before each mixing step.
    bool fp_newton = true;
    double fp_tol = 1e-10;
    double stage_tol = 1e-8;
    double inner_tol = 1e-12;
    int max_fp_iter = 500;
    int max_newton_iter = 200;
    /// A stage whose residual exceeds this fraction of the previous one ends the schedule.
    double stagnation_ratio = 0.9;
    bool force_mu_path = false;
    /// Stop the mu continuation once the unperturbed residual meets the
    /// target; false runs every mu in the schedule.
    bool mu_stop_early = true;

    double resolved_alpha_exp(const ProblemSpec& spec) const
    {
        return std::isnan(alpha_exp) ? spec.p / spec.m : alpha_exp;
    }

    void validate(const ProblemSpec& spec) const
    {
        auto strictly_decreasing = [](const std::vector<double>& s) {
            for (std::size_t k = 1; k < s.size(); ++k)
                if (!(s[k] < s[k - 1]))
                    return false;
            return true;
        };
        if (epsilon_schedule.empty() || !strictly_decreasing(epsilon_schedule) || !(epsilon_schedule.back() > 0.0))
            throw ConfigError("must be a strictly decreasing list of positive values", "cascade.epsilon_schedule");
        if (!strictly_decreasing(lambda_schedule) || (!lambda_schedule.empty() && !(lambda_schedule.back() > 0.0)))
            throw ConfigError("must be a strictly decreasing list of positive values", "cascade.lambda_schedule");
        if (!strictly_decreasing(mu_schedule))
            throw ConfigError("must be strictly decreasing", "cascade.mu_schedule");
        for (double mu : mu_schedule)
            if (!(mu > 0.0 && mu < 1.0))
                throw ConfigError("values must lie in (0,1)", "cascade.mu_schedule");
        const double ae = resolved_alpha_exp(spec);
        if (!(ae > 0.0) || !std::isfinite(ae))
            throw ConfigError("must be positive", "cascade.alpha_exp");
        if ((spec.needs_mu_path() || force_mu_path) && !(ae > spec.p / spec.m - 1.0))
            throw ConfigError("must exceed p/m - 1", "cascade.alpha_exp");
        if ((spec.needs_mu_path() || force_mu_path) && mu_schedule.empty())
            throw ConfigError("the m <= p regime needs a nonempty schedule", "cascade.mu_schedule");
        if (!(delta >= 0.0) || !std::isfinite(delta))
            throw ConfigError("must be >= 0", "cascade.delta");
        if (spec.m < 2.0 && !(delta > 0.0))
            throw ConfigError("must be positive when m < 2", "cascade.delta");
        if (!(omega > 0.0 && omega <= 1.0))
            throw ConfigError("must lie in (0,1]", "cascade.omega");
        if (anderson_depth < 0)
            throw ConfigError("must be >= 0", "cascade.anderson_depth");
        if (!(fp_tol > 0.0))
            throw ConfigError("must be positive", "cascade.fp_tol");
        if (!(stage_tol > 0.0))
            throw ConfigError("must be positive", "cascade.stage_tol");
        if (!(inner_tol > 0.0))
            throw ConfigError("must be positive", "cascade.inner_tol");
        if (max_fp_iter < 1)
            throw ConfigError("must be >= 1", "cascade.max_fp_iter");
        if (max_newton_iter < 1)
            throw ConfigError("must be >= 1", "cascade.max_newton_iter");
        if (!(stagnation_ratio > 0.0 && stagnation_ratio <= 1.0))
            throw ConfigError("must lie in (0,1]", "cascade.stagnation_ratio");
    }
};

/// Uniform-in-epsilon quantities of the a priori estimates, per stage.
struct AprioriAudit {
    double derivative_bound = 0.0; // int |u'|^p + int |xi|^{p'} + int psi(u')
    double elliptic_bound = 0.0;   // eps |u|^p_{W^{1,p}(V)} + |u|^m_{L^m(X)} + eps |u|^2_{L^2(V)}
    double sobolev_bound = 0.0;    // |u|^p_{W^{1,p}(V)}
    double dual_bound = 0.0;       // int |eta|^{m'}_{V*} (surrogate for X*) + int |alpha(u)|^{p'}_{V*}
};

struct StageRecord {
    std::string kind; // "fixed_point", "epsilon", "mu"
    double epsilon = 0.0;
    double lambda = 0.0;
    double mu = 0.0;
    int iterations = 0;
    int newton_iterations = 0;
    int omega_halvings = 0;
    int newton_steps = 0;
    double omega = 0.0;
    double fp_residual = 0.0;
    double residual_ap = 0.0;       // unperturbed equation
    double stage_residual = 0.0;    // equation actually solved (with mu term)
    double energy_margin = 0.0;     // sum dt <xi,u'> - sum dt <f,u'>
    double energy_scale = 1.0;
    double mu_term = 0.0;           // |mu phi^a(u) eta|_{L^{p'}(V*)}
    double beta_bound_ratio = 0.0;
    AprioriAudit apriori;
    bool converged = false;
    std::vector<double> fp_history;
};

struct SolveReport {
    std::string route; // "plain" or "mu_path"
    std::vector<StageRecord> stages;
    bool converged = false;
    double final_residual = 0.0;
    double target = 0.0;
    double final_epsilon = 0.0;
    double final_mu = 0.0;
    std::string message;
};

struct StageResult {
    PeriodicTrajectory u;
    DualTrajectory xi;
    DualTrajectory eta;
    DualTrajectory h;
    SolveReport report;
};

namespace detail {

inline double dual_norm(const DualTrajectory& g, const ProblemSpec& spec)
{
    return dual_bochner(g, spec);
}

/// alpha(u'_n) + scale_n eta_n - f_n, with scale_n = 1 + mu phi^a(u_n).
inline DualTrajectory equation_defect(const PeriodicTrajectory& u, const DualTrajectory& f, const ProblemSpec& spec,
                                      double delta, const std::optional<PerturbedFunctional>& pf)
{
    const DiffusionEnergy energy = make_energy(spec, delta, pf);
    DualTrajectory r = xi_of(u, spec);
    for (std::size_t n = 0; n < u.steps(); ++n) {
        const Field g = energy.gradient(u.slice(n));
        auto out = r.slice(n);
        const auto fn = f.slice(n);
        for (std::size_t i = 0; i < g.size(); ++i)
            out[i] += g[i] - fn[i];
    }
    return r;
}

inline double mu_term_norm(const PeriodicTrajectory& u, const ProblemSpec& spec, double delta,
                           const PerturbedFunctional& pf)
{
    DualTrajectory t(u.steps(), u.nodes());
    for (std::size_t n = 0; n < u.steps(); ++n) {
        const double phi = eval_phi(u.slice(n), spec.a, spec.m, delta, spec.smesh);
        const double c = pf.mu * std::pow(phi, pf.alpha_exp);
        const Field g = grad_phi(u.slice(n), spec.a, spec.m, delta, spec.smesh);
        auto out = t.slice(n);
        for (std::size_t i = 0; i < g.size(); ++i)
            out[i] = c * g[i];
    }
    return dual_norm(t, spec);
}

inline AprioriAudit apriori_audit(const PeriodicTrajectory& u, const DualTrajectory& xi, const DualTrajectory& eta,
                                  double epsilon, const ProblemSpec& spec)
{
    const double p = spec.p, m = spec.m, q = conjugate_exponent(p), mq = conjugate_exponent(m);
    const PeriodicTrajectory du = time_derivative(u, spec.tmesh);
    const double dt = spec.tmesh.dt();
    double du_p = 0.0, xi_q = 0.0, psi_du = 0.0, u_p = 0.0, u_x = 0.0, u_2 = 0.0, eta_m = 0.0, au_q = 0.0;
    for (std::size_t n = 0; n < u.steps(); ++n) {
        du_p += std::pow(norm_V(du.slice(n), p, spec.smesh), p);
        xi_q += std::pow(norm_Vstar(xi.slice(n), q, spec.smesh), q);
        psi_du += eval_psi(du.slice(n), spec.nl, spec.smesh);
        u_p += std::pow(norm_V(u.slice(n), p, spec.smesh), p);
        u_x += std::pow(norm_X(u.slice(n), m, spec.smesh), m);
        const double l2 = lp_norm(u.slice(n), 2.0, spec.smesh);
        u_2 += l2 * l2;
        eta_m += std::pow(lp_norm(eta.slice(n), q, spec.smesh), mq);
        au_q += std::pow(norm_Vstar(grad_psi(u.slice(n), spec.nl), q, spec.smesh), q);
    }
    AprioriAudit a;
    a.derivative_bound = dt * (du_p + xi_q + psi_du);
    a.sobolev_bound = dt * (u_p + du_p);
    a.elliptic_bound = epsilon * a.sobolev_bound + dt * u_x + epsilon * dt * u_2;
    a.dual_bound = dt * (eta_m + au_q);
    return a;
}

inline void fill_energy_margin(StageRecord& rec, const PeriodicTrajectory& u, const DualTrajectory& xi,
                               const DualTrajectory& f, const ProblemSpec& spec)
{
    const PeriodicTrajectory du = time_derivative(u, spec.tmesh);
    const double lhs = space_time_pairing(xi, du, spec.smesh, spec.tmesh);
    const double rhs = space_time_pairing(f, du, spec.smesh, spec.tmesh);
    rec.energy_margin = lhs - rhs;
    const double fn = lebesgue_bochner_norm(f, conjugate_exponent(spec.p), conjugate_exponent(spec.p), spec.smesh,
                                            spec.tmesh);
    const double dn = lebesgue_bochner_norm(du, spec.p, spec.p, spec.smesh, spec.tmesh);
    rec.energy_scale = std::max(1.0, fn * dn);
}

struct Context {
    std::optional<PerturbedFunctional> perturbation;
    NewtonWorkspace workspace;
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    bool lu_analyzed = false;
    Eigen::Index lu_rows = 0;
    int newton_iterations = 0;
};

inline PeriodicTrajectory minimize_or_throw(const ObjectiveConfig& cfg, const ProblemSpec& spec,
                                            const PeriodicTrajectory& u0, const CascadeParams& params, Context& ctx)
{
    MinimizeResult r = minimize(cfg, spec, u0, params.inner_tol, params.max_newton_iter, &ctx.workspace);
    ctx.newton_iterations += r.report.iterations;
    // The attainable gradient norm is limited by roundoff in the assembled
    // operator; a stall within a factor 100 of the tolerance is accepted.
    if (!r.report.converged) {
        const double ref = std::max(1.0, dual_bochner(cfg.f_plus_h, spec));
        if (!(r.report.final_gradient_norm <= 100.0 * params.inner_tol * ref))
            throw SolverFailure("minimizer stalled at epsilon=" + std::to_string(cfg.epsilon) +
                                    ", lambda=" + std::to_string(cfg.lambda) + " with gradient norm " +
                                    std::to_string(r.report.final_gradient_norm),
                                r.report.final_gradient_norm);
    }
    return std::move(r.u);
}

/// u_h for the given h: lambda stages on a cold start, then lambda = 0.
inline PeriodicTrajectory solve_APh_impl(const DualTrajectory& f, const DualTrajectory& h, double epsilon,
                                         const CascadeParams& params, const ProblemSpec& spec, Context& ctx,
                                         const PeriodicTrajectory* warm)
{
    ObjectiveConfig cfg;
    cfg.epsilon = epsilon;
    cfg.delta = params.delta;
    cfg.perturbation = ctx.perturbation;
    cfg.f_plus_h = f;
    cfg.f_plus_h += h;
    PeriodicTrajectory u = warm ? *warm : PeriodicTrajectory(spec.tmesh.size(), spec.smesh.size());
    if (!warm) {
        for (double lambda : params.lambda_schedule) {
            cfg.lambda = lambda;
            u = minimize_or_throw(cfg, spec, u, params, ctx);
        }
    }
    cfg.lambda = 0.0;
    return minimize_or_throw(cfg, spec, u, params, ctx);
}

inline DualTrajectory neg_xi(const PeriodicTrajectory& u, const ProblemSpec& spec)
{
    DualTrajectory b = xi_of(u, spec);
    b *= -1.0;
    return b;
}

struct NewtonStep {
    DualTrajectory h;
    PeriodicTrajectory u;
};

/// Newton step for h - beta(h) = 0 at (h, u_h). With K the Newton matrix of
/// the functional at u_h, d beta/d h = -alpha'(u') D_t K^{-1}, so the step
/// solves (K + alpha'(u') D_t) du = beta(h) - h and sets dh = K du.
inline std::optional<NewtonStep> newton_fixed_point_step(const DualTrajectory& f, const DualTrajectory& h,
                                                         const PeriodicTrajectory& u, const DualTrajectory& r,
                                                         double epsilon, const CascadeParams& params,
                                                         const ProblemSpec& spec, Context& ctx)
{
    ObjectiveConfig cfg;
    cfg.epsilon = epsilon;
    cfg.delta = params.delta;
    cfg.perturbation = ctx.perturbation;
    cfg.f_plus_h = f;
    cfg.f_plus_h += h;
    ObjectiveEvaluator ev(cfg, spec);
    const Eigen::SparseMatrix<double> K = ev.newton_matrix(u);
    const std::size_t N = spec.tmesh.size(), M = spec.smesh.size();
    const double dt = spec.tmesh.dt();
    const PeriodicTrajectory du = time_derivative(u, spec.tmesh);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(2 * N * M);
    for (std::size_t n = 0; n < N; ++n) {
        const std::size_t pv = spec.tmesh.prev(n);
        for (std::size_t i = 0; i < M; ++i) {
            const double c = spec.nl.derivative(du(n, i)) / dt;
            trip.emplace_back(static_cast<int>(n * M + i), static_cast<int>(n * M + i), c);
            trip.emplace_back(static_cast<int>(n * M + i), static_cast<int>(pv * M + i), -c);
        }
    }
    Eigen::SparseMatrix<double> A(K.rows(), K.cols());
    A.setFromTriplets(trip.begin(), trip.end());
    A += K;
    if (!ctx.lu_analyzed || ctx.lu_rows != A.rows()) {
        ctx.lu.analyzePattern(A);
        ctx.lu_analyzed = true;
        ctx.lu_rows = A.rows();
    }
    ctx.lu.factorize(A);
    if (ctx.lu.info() != Eigen::Success)
        return std::nullopt;
    const Eigen::Map<const Eigen::VectorXd> rv(r.raw().data(), A.rows());
    const Eigen::VectorXd dU = ctx.lu.solve(rv);
    if (!dU.allFinite())
        return std::nullopt;
    const Eigen::VectorXd dH = K * dU;
    NewtonStep s{h, u};
    for (Eigen::Index k = 0; k < A.rows(); ++k) {
        s.h.raw()[static_cast<std::size_t>(k)] += dH[k];
        s.u.raw()[static_cast<std::size_t>(k)] += dU[k];
    }
    return s;
}

struct FixedPointState {
    PeriodicTrajectory u;
    DualTrajectory h;
    bool warm = false;
};

/// Damped Anderson iteration on h = beta(h) at one epsilon.
inline StageRecord fixed_point_impl(const DualTrajectory& f, double epsilon, const CascadeParams& params,
                                    const ProblemSpec& spec, Context& ctx, FixedPointState& st)
{
    StageRecord rec;
    rec.kind = "fixed_point";
    rec.epsilon = epsilon;
    rec.mu = ctx.perturbation ? ctx.perturbation->mu : 0.0;
    const int newton_before = ctx.newton_iterations;
    const double scale = std::max(1.0, dual_norm(f, spec));
    if (!st.warm) {
        st.h = DualTrajectory(spec.tmesh.size(), spec.smesh.size());
        st.u = PeriodicTrajectory(spec.tmesh.size(), spec.smesh.size());
    }
    PeriodicTrajectory u = solve_APh_impl(f, st.h, epsilon, params, spec, ctx, st.warm ? &st.u : nullptr);
    DualTrajectory r = neg_xi(u, spec);
    r -= st.h;
    double rn = dual_norm(r, spec);
    rec.fp_history.push_back(rn);
    double omega = params.omega;
    AndersonMixer mixer(static_cast<std::size_t>(params.anderson_depth));
    int it = 0;
    for (; it < params.max_fp_iter; ++it) {
        if (rn <= params.fp_tol * scale) {
            rec.converged = true;
            break;
        }
        if (params.fp_newton) {
            std::optional<NewtonStep> step = newton_fixed_point_step(f, st.h, u, r, epsilon, params, spec, ctx);
            bool accepted = false;
            // Backtracking on the step length; near kinks of the smoothed flux
            // the full step often overshoots.
            for (double t = 1.0; step && t >= 0.0625 && !accepted; t *= 0.5) {
                DualTrajectory h_t = st.h;
                PeriodicTrajectory u_t = u;
                for (std::size_t k = 0; k < h_t.raw().size(); ++k) {
                    h_t.raw()[k] += t * (step->h.raw()[k] - st.h.raw()[k]);
                    u_t.raw()[k] += t * (step->u.raw()[k] - u.raw()[k]);
                }
                PeriodicTrajectory u_new = solve_APh_impl(f, h_t, epsilon, params, spec, ctx, &u_t);
                DualTrajectory r_new = neg_xi(u_new, spec);
                r_new -= h_t;
                const double rn_new = dual_norm(r_new, spec);
                if (rn_new < (1.0 - 1e-4 * t) * rn) {
                    st.h = std::move(h_t);
                    u = std::move(u_new);
                    r = std::move(r_new);
                    rn = rn_new;
                    rec.fp_history.push_back(rn);
                    ++rec.newton_steps;
                    mixer.clear();
                    accepted = true;
                }
            }
            if (accepted)
                continue;
        }
        DualTrajectory h_new(st.h.steps(), st.h.nodes());
        h_new.raw() = mixer.next(st.h.raw(), r.raw(), omega);
        PeriodicTrajectory u_new = solve_APh_impl(f, h_new, epsilon, params, spec, ctx, &u);
        DualTrajectory r_new = neg_xi(u_new, spec);
        r_new -= h_new;
        const double rn_new = dual_norm(r_new, spec);
        if (!(rn_new <= rn)) {
            // Residual went up: keep the old iterate, halve the relaxation and
            // restart the mixing history.
            omega *= 0.5;
            ++rec.omega_halvings;
            mixer.clear();
            if (omega < params.omega * 1e-3)
                break;
            continue;
        }
        st.h = std::move(h_new);
        u = std::move(u_new);
        r = std::move(r_new);
        rn = rn_new;
        rec.fp_history.push_back(rn);
    }
    if (rn <= params.fp_tol * scale)
        rec.converged = true;
    rec.iterations = it;
    rec.omega = omega;
    rec.fp_residual = rn;
    rec.newton_iterations = ctx.newton_iterations - newton_before;
    st.u = std::move(u);
    st.warm = true;

    const DualTrajectory xi = xi_of(st.u, spec);
    const DualTrajectory eta = eta_of(st.u, spec, params.delta);
    fill_energy_margin(rec, st.u, xi, f, spec);
    rec.apriori = apriori_audit(st.u, xi, eta, epsilon, spec);
    {
        DualTrajectory d = xi;
        d += eta;
        d -= f;
        rec.residual_ap = dual_norm(d, spec);
    }
    rec.stage_residual = dual_norm(equation_defect(st.u, f, spec, params.delta, ctx.perturbation), spec);
    if (ctx.perturbation)
        rec.mu_term = mu_term_norm(st.u, spec, params.delta, *ctx.perturbation);
    {
        const double q = conjugate_exponent(spec.p);
        const double b = dual_norm(xi, spec), fn = dual_norm(f, spec), hn = dual_norm(st.h, spec);
        rec.beta_bound_ratio = epsilon * std::pow(b, q) /
                               (1.0 + std::pow(fn, q) + std::pow(hn, q) + epsilon * spec.tmesh.period());
    }
    return rec;
}

inline StageResult finish(const FixedPointState& st, const ProblemSpec& spec, double delta, SolveReport report)
{
    StageResult out;
    out.u = st.u;
    out.xi = xi_of(st.u, spec);
    out.eta = eta_of(st.u, spec, delta);
    out.h = st.h;
    out.report = std::move(report);
    return out;
}

/// Runs fixed points along epsilon_schedule[start..], stopping when the
/// solved equation's residual reaches `target` or stagnates.
inline std::size_t epsilon_loop(const DualTrajectory& f, const CascadeParams& params, const ProblemSpec& spec,
                                Context& ctx, FixedPointState& st, std::size_t start, double target,
                                SolveReport& report)
{
    double prev = std::numeric_limits<double>::infinity();
    std::size_t k = start;
    for (; k < params.epsilon_schedule.size(); ++k) {
        StageRecord rec = fixed_point_impl(f, params.epsilon_schedule[k], params, spec, ctx, st);
        const double r = rec.stage_residual;
        report.final_epsilon = rec.epsilon;
        const bool fp_ok = rec.converged;
        report.stages.push_back(std::move(rec));
        if (!fp_ok) {
            report.message = "fixed point did not converge at epsilon=" + std::to_string(params.epsilon_schedule[k]);
            return k;
        }
        if (r <= target)
            return k;
        if (r > params.stagnation_ratio * prev)
            return k;
        prev = r;
    }
    return params.epsilon_schedule.size() - 1;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Public operations
// ---------------------------------------------------------------------------

/// Solution u_h of the elliptic-in-time regularized problem with extra
/// forcing h, computed by minimising I over the lambda schedule then lambda = 0.
inline StageResult solve_APh(const DualTrajectory& f, const DualTrajectory& h, double epsilon,
                             const CascadeParams& params, const ProblemSpec& spec,
                             const std::optional<PerturbedFunctional>& pf = std::nullopt)
{
    params.validate(spec);
    require_shape(f, spec.smesh, spec.tmesh, "forcing");
    require_shape(h, spec.smesh, spec.tmesh, "h");
    detail::Context ctx;
    ctx.perturbation = pf;
    detail::FixedPointState st;
    st.u = detail::solve_APh_impl(f, h, epsilon, params, spec, ctx, nullptr);
    st.h = h;
    SolveReport rep;
    rep.route = "APh";
    rep.converged = true;
    rep.final_epsilon = epsilon;
    return detail::finish(st, spec, params.delta, std::move(rep));
}

/// beta(h) = -alpha(u_h').
inline DualTrajectory beta_map(const DualTrajectory& h, const DualTrajectory& f, double epsilon,
                               const CascadeParams& params, const ProblemSpec& spec,
                               const std::optional<PerturbedFunctional>& pf = std::nullopt)
{
    const StageResult r = solve_APh(f, h, epsilon, params, spec, pf);
    return detail::neg_xi(r.u, spec);
}

/// A solution of the epsilon-regularized periodic problem via the fixed point h = beta(h).
inline StageResult fixed_point_solve(const DualTrajectory& f, double epsilon, const CascadeParams& params,
                                     const ProblemSpec& spec,
                                     const std::optional<PerturbedFunctional>& pf = std::nullopt)
{
    params.validate(spec);
    require_shape(f, spec.smesh, spec.tmesh, "forcing");
    detail::Context ctx;
    ctx.perturbation = pf;
    detail::FixedPointState st;
    SolveReport rep;
    rep.route = "fixed_point";
    StageRecord rec = detail::fixed_point_impl(f, epsilon, params, spec, ctx, st);
    rep.converged = rec.converged;
    rep.final_residual = rec.residual_ap;
    rep.final_epsilon = epsilon;
    rep.stages.push_back(std::move(rec));
    return detail::finish(st, spec, params.delta, std::move(rep));
}

/// Fixed points along the epsilon schedule with warm starts; the plain route for m > p.
inline StageResult epsilon_continuation(const DualTrajectory& f, const CascadeParams& params, const ProblemSpec& spec)
{
    params.validate(spec);
    require_shape(f, spec.smesh, spec.tmesh, "forcing");
    detail::Context ctx;
    detail::FixedPointState st;
    SolveReport rep;
    rep.route = "plain";
    rep.target = params.stage_tol * std::max(1.0, detail::dual_norm(f, spec));
    detail::epsilon_loop(f, params, spec, ctx, st, 0, rep.target, rep);
    const StageRecord& last = rep.stages.back();
    rep.final_residual = last.residual_ap;
    rep.converged = last.converged && last.residual_ap <= rep.target;
    if (rep.message.empty() && !rep.converged)
        rep.message = "residual stagnated above the target";
    return detail::finish(st, spec, params.delta, std::move(rep));
}

/// Continuation in mu for Phi = phi + mu/(1+a) phi^{1+a}; each mu runs the
/// epsilon loop (the first from the start of the schedule, later ones from
/// the last epsilon reached). Stops when the unperturbed residual reaches the
/// target.
inline StageResult mu_path(const DualTrajectory& f, const CascadeParams& params, const ProblemSpec& spec)
{
    params.validate(spec);
    require_shape(f, spec.smesh, spec.tmesh, "forcing");
    detail::Context ctx;
    detail::FixedPointState st;
    SolveReport rep;
    rep.route = "mu_path";
    rep.target = params.stage_tol * std::max(1.0, detail::dual_norm(f, spec));
    const double ae = params.resolved_alpha_exp(spec);
    std::size_t eps_start = 0;
    for (double mu : params.mu_schedule) {
        ctx.perturbation = PerturbedFunctional{mu, ae};
        const std::size_t first = rep.stages.size();
        eps_start = detail::epsilon_loop(f, params, spec, ctx, st, eps_start, 0.1 * rep.target, rep);
        for (std::size_t k = first; k < rep.stages.size(); ++k)
            rep.stages[k].kind = "mu";
        rep.final_mu = mu;
        const StageRecord& last = rep.stages.back();
        if (!last.converged)
            break;
        if (params.mu_stop_early && last.residual_ap <= rep.target)
            break;
    }
    const StageRecord& last = rep.stages.back();
    rep.final_residual = last.residual_ap;
    rep.converged = last.converged && last.residual_ap <= rep.target;
    if (rep.message.empty() && !rep.converged)
        rep.message = "residual above the target at the end of the mu schedule";
    return detail::finish(st, spec, params.delta, std::move(rep));
}

/// Routes m <= p (or force_mu_path) through mu_path, otherwise epsilon_continuation.
inline StageResult solve(const DualTrajectory& f, const CascadeParams& params, const ProblemSpec& spec)
{
    if (spec.needs_mu_path() || params.force_mu_path)
        return mu_path(f, params, spec);
    return epsilon_continuation(f, params, spec);
}

inline StageResult solve(const ProblemSpec& spec, const CascadeParams& params)
{
    spec.validate();
    return solve(spec.f, params, spec);
}

struct OracleResult {
    bool converged = false;
    int iterations = 0;
    double residual = 0.0;
    std::string message;
    std::optional<StageResult> result;
};

/// Damped Newton on G_n(u) = alpha(u'_n) + grad phi(u_n) - f_n for all n at
/// once (cyclic block-bidiagonal Jacobian, sparse LU). Convergence is not
/// guaranteed; failures are returned, not thrown.
inline OracleResult direct_newton_oracle(const DualTrajectory& f, const ProblemSpec& spec, double delta, double tol,
                                         int max_iter = 100)
{
    require_shape(f, spec.smesh, spec.tmesh, "forcing");
    const std::size_t N = spec.tmesh.size(), M = spec.smesh.size();
    const double dt = spec.tmesh.dt();
    const auto total = static_cast<Eigen::Index>(N * M);
    auto defect = [&](const PeriodicTrajectory& u) {
        DualTrajectory r = xi_of(u, spec);
        r += eta_of(u, spec, delta);
        r -= f;
        return r;
    };
    OracleResult out;
    const double scale = std::max(1.0, detail::dual_norm(f, spec));
    PeriodicTrajectory u(N, M);
    DualTrajectory r = defect(u);
    double rn = detail::dual_norm(r, spec);
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    bool analyzed = false;
    for (out.iterations = 0; out.iterations < max_iter; ++out.iterations) {
        if (rn <= tol * scale) {
            out.converged = true;
            break;
        }
        const PeriodicTrajectory du = time_derivative(u, spec.tmesh);
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(N * M * 4);
        for (std::size_t n = 0; n < N; ++n) {
            const Tridiagonal t = phi_curvature(u.slice(n), spec.a, spec.m, delta, spec.smesh);
            const std::size_t pv = spec.tmesh.prev(n);
            for (std::size_t i = 0; i < M; ++i) {
                const int row = static_cast<int>(n * M + i);
                const double c = spec.nl.derivative(du(n, i)) / dt;
                trip.emplace_back(row, row, t.diag[i] + c);
                trip.emplace_back(row, static_cast<int>(pv * M + i), -c);
                if (i + 1 < M) {
                    trip.emplace_back(row, row + 1, t.off[i]);
                    trip.emplace_back(row + 1, row, t.off[i]);
                }
            }
        }
        Eigen::SparseMatrix<double> J(total, total);
        J.setFromTriplets(trip.begin(), trip.end());
        if (!analyzed) {
            lu.analyzePattern(J);
            analyzed = true;
        }
        lu.factorize(J);
        if (lu.info() != Eigen::Success) {
            out.message = "singular Jacobian";
            break;
        }
        const Eigen::Map<const Eigen::VectorXd> rv(r.raw().data(), total);
        const Eigen::VectorXd step = lu.solve(rv);
        if (!step.allFinite()) {
            out.message = "non-finite Newton step";
            break;
        }
        double t = 1.0;
        bool accepted = false;
        for (int ls = 0; ls < 40; ++ls) {
            PeriodicTrajectory trial = u;
            for (Eigen::Index k = 0; k < total; ++k)
                trial.raw()[static_cast<std::size_t>(k)] -= t * step[k];
            DualTrajectory rt = defect(trial);
            const double rtn = detail::dual_norm(rt, spec);
            if (rtn <= (1.0 - 1e-4 * t) * rn) {
                u = std::move(trial);
                r = std::move(rt);
                rn = rtn;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) {
            out.message = "line search failed";
            break;
        }
    }
    if (rn <= tol * scale)
        out.converged = true;
    out.residual = rn;
    if (out.converged) {
        detail::FixedPointState st;
        st.u = u;
        st.h = DualTrajectory(N, M);
        SolveReport rep;
        rep.route = "direct_newton";
        rep.converged = true;
        rep.final_residual = rn;
        out.result = detail::finish(st, spec, delta, std::move(rep));
    } else if (out.message.empty()) {
        out.message = "iteration limit reached";
    }
    return out;
}

} // namespace dnp
