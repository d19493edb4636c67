#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dnp/diffusion.hpp"
#include "dnp/error.hpp"
#include "dnp/mesh.hpp"
#include "dnp/nonlinearity.hpp"

namespace dnp {

// ---------------------------------------------------------------------------
// psi(u) = int A(u): value, gradient, conjugate
// ---------------------------------------------------------------------------

inline double eval_psi(std::span<const double> u, const Nonlinearity& nl, const SpatialMesh& mesh)
{
    require_finite(u, "field");
    double s = 0.0;
    for (double x : u)
        s += nl.primitive(x);
    return mesh.dx() * s;
}

/// Pointwise alpha(u_i): the gradient of eval_psi under the pairing.
inline Field grad_psi(std::span<const double> u, const Nonlinearity& nl)
{
    require_finite(u, "field");
    Field g(u.size());
    for (std::size_t i = 0; i < u.size(); ++i)
        g[i] = nl(u[i]);
    return g;
}

/// psi*(xi) = sum_i dx A*(xi_i). `bracket_limited` is set when some A* was
/// cut off at the search bracket (xi outside the range of a bounded alpha).
inline ConjugateValue fenchel_psi_star(std::span<const double> xi, const Nonlinearity& nl, const SpatialMesh& mesh)
{
    require_finite(xi, "dual field");
    ConjugateValue total;
    for (double x : xi) {
        const ConjugateValue c = nl.conjugate(x);
        total.value += c.value;
        total.bracket_limited = total.bracket_limited || c.bracket_limited;
    }
    total.value *= mesh.dx();
    return total;
}

// ---------------------------------------------------------------------------
// Duality mapping of the discrete L^r space
// ---------------------------------------------------------------------------

/// F(v)_i = |v|^{2-r} |v_i|^{r-2} v_i, with F(0) = 0. Satisfies
/// <F(v), v> = |v|^2 and |F(v)|_{r'} = |v|_r.
inline Field duality_map(std::span<const double> v, double r, const SpatialMesh& mesh)
{
    if (!(r > 1.0))
        throw ConfigError("duality map exponent must be > 1");
    Field out(v.size(), 0.0);
    if (r == 2.0) {
        std::copy(v.begin(), v.end(), out.begin());
        return out;
    }
    const double norm = lp_norm(v, r, mesh);
    if (norm == 0.0)
        return out;
    // |v|^{2-r} |v_i|^{r-1} sign(v_i) = |v| (|v_i|/|v|)^{r-1} sign(v_i)
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double a = std::abs(v[i]);
        if (a != 0.0)
            out[i] = std::copysign(norm * std::pow(a / norm, r - 1.0), v[i]);
    }
    return out;
}

/// Jacobian of the duality map (pairing units): D + c s s^T with
/// D_ii = (r-1)|w|^{2-r}|w_i|^{r-2}, s_i = |w_i|^{r-1} sign(w_i),
/// c = (2-r)|w|^{2-2r} dx. For r < 2 the diagonal is floored through
/// |w_i| -> sqrt(w_i^2 + (floor |w|)^2); at w = 0 the identity is returned.
struct DualityJacobian {
    std::vector<double> diag;
    std::vector<double> dir;
    double coef = 0.0;
};

inline DualityJacobian duality_jacobian(std::span<const double> w, double r, const SpatialMesh& mesh,
                                        double floor = 1e-8)
{
    DualityJacobian J;
    J.diag.assign(w.size(), 1.0);
    J.dir.assign(w.size(), 0.0);
    if (r == 2.0)
        return J;
    const double norm = lp_norm(w, r, mesh);
    if (norm == 0.0)
        return J;
    // In units relative to |w|: diag_i = (r-1)(|w_i|/|w|)^{r-2}, and with
    // dir_i = (|w_i|/|w|)^{r-1} sign(w_i) the rank-one factor is (2-r) dx.
    for (std::size_t i = 0; i < w.size(); ++i) {
        double rel = std::abs(w[i]) / norm;
        J.dir[i] = std::copysign(std::pow(rel, r - 1.0), w[i]);
        if (r < 2.0)
            rel = std::sqrt(rel * rel + floor * floor);
        J.diag[i] = (r - 1.0) * std::pow(rel, r - 2.0);
    }
    J.coef = (2.0 - r) * mesh.dx();
    return J;
}

inline Eigen::MatrixXd dense(const DualityJacobian& J)
{
    const auto M = static_cast<Eigen::Index>(J.diag.size());
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(M, M);
    for (Eigen::Index i = 0; i < M; ++i)
        G(i, i) = J.diag[static_cast<std::size_t>(i)];
    if (J.coef != 0.0) {
        const Eigen::Map<const Eigen::VectorXd> s(J.dir.data(), M);
        G.noalias() += J.coef * s * s.transpose();
    }
    return G;
}

// ---------------------------------------------------------------------------
// Proximal machinery over a generic slice functional
// ---------------------------------------------------------------------------

/// A convex functional on one spatial slice with value, pairing gradient and
/// Jacobian of the gradient.
template <class E>
concept SliceFunctional = requires(const E& e, std::span<const double> u) {
    { e.value(u) } -> std::convertible_to<double>;
    { e.gradient(u) } -> std::convertible_to<Field>;
    { e.hessian(u) } -> std::convertible_to<Eigen::MatrixXd>;
};

/// Result of minimising |v - w|_r^2/2 + scale E(v) - <wstar, v>.
struct ProxSolution {
    Field v;
    double objective = 0.0;
    double gradient_norm = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// Damped Newton for the strictly convex slice problem
///   min_v |v - w|_r^2 / 2 + scale E(v) - <wstar, v>.
/// Gradient: F_r(v - w) + scale grad E(v) - wstar. Stops when the dual norm
/// of the gradient is below tol * max(1, |wstar| + scale |grad E(w)|).
template <SliceFunctional E>
ProxSolution slice_prox(const E& energy, std::span<const double> w, std::span<const double> wstar, double scale,
                        double r, const SpatialMesh& mesh, double tol = 1e-13, int max_iter = 200,
                        std::span<const double> start = {})
{
    const std::size_t M = w.size();
    const double rc = conjugate_exponent(r);
    auto objective = [&](std::span<const double> v) {
        Field d(M);
        for (std::size_t i = 0; i < M; ++i)
            d[i] = v[i] - w[i];
        const double n = lp_norm(d, r, mesh);
        return 0.5 * n * n + scale * energy.value(v) - (wstar.empty() ? 0.0 : pairing(wstar, v, mesh));
    };
    auto gradient = [&](std::span<const double> v) {
        Field d(M);
        for (std::size_t i = 0; i < M; ++i)
            d[i] = v[i] - w[i];
        Field g = duality_map(d, r, mesh);
        const Field ge = energy.gradient(v);
        for (std::size_t i = 0; i < M; ++i)
            g[i] += scale * ge[i] - (wstar.empty() ? 0.0 : wstar[i]);
        return g;
    };

    ProxSolution sol;
    sol.v.assign(start.empty() ? w.begin() : start.begin(), start.empty() ? w.end() : start.end());
    double ref = 1.0;
    {
        const Field gw = energy.gradient(w);
        Field t(M);
        for (std::size_t i = 0; i < M; ++i)
            t[i] = scale * gw[i] - (wstar.empty() ? 0.0 : wstar[i]);
        ref = std::max(1.0, lp_norm(t, rc, mesh));
    }
    double fval = objective(sol.v);
    Field g = gradient(sol.v);
    double gnorm = lp_norm(g, rc, mesh);
    for (sol.iterations = 0; sol.iterations < max_iter; ++sol.iterations) {
        if (gnorm <= tol * ref) {
            sol.converged = true;
            break;
        }
        Field d(M);
        for (std::size_t i = 0; i < M; ++i)
            d[i] = sol.v[i] - w[i];
        Eigen::MatrixXd H = dense(duality_jacobian(d, r, mesh)) + scale * energy.hessian(sol.v);
        const Eigen::Map<const Eigen::VectorXd> gv(g.data(), static_cast<Eigen::Index>(M));
        Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
        Eigen::VectorXd step = -ldlt.solve(gv);
        double slope = mesh.dx() * gv.dot(step);
        if (ldlt.info() != Eigen::Success || !(slope < 0.0) || !step.allFinite()) {
            step = -gv;
            slope = mesh.dx() * gv.dot(step);
        }
        double t = 1.0;
        Field trial(M);
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            for (std::size_t i = 0; i < M; ++i)
                trial[i] = sol.v[i] + t * step[static_cast<Eigen::Index>(i)];
            const double ft = objective(trial);
            if (ft <= fval + 1e-4 * t * slope) {
                // A step that gains far less than the quadratic model predicts
                // is typically the z -> -z cycle of Newton on |z|^m, m < 2;
                // keep halving while the objective keeps improving.
                double best = ft;
                if (ft > fval + 0.25 * t * slope) {
                    Field half(M);
                    while (t > 1e-6) {
                        for (std::size_t i = 0; i < M; ++i)
                            half[i] = sol.v[i] + 0.5 * t * step[static_cast<Eigen::Index>(i)];
                        const double fh = objective(half);
                        if (!(fh < best))
                            break;
                        best = fh;
                        t *= 0.5;
                        trial = half;
                    }
                }
                fval = best;
                accepted = true;
                break;
            }
            // At roundoff level the objective cannot certify progress; fall
            // back to the gradient norm for the full Newton step.
            if (t == 1.0 && std::abs(slope) <= 1e-14 * (1.0 + std::abs(fval))) {
                const Field gt = gradient(trial);
                if (lp_norm(gt, rc, mesh) < gnorm) {
                    fval = ft;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if (!accepted)
            break;
        sol.v = trial;
        g = gradient(sol.v);
        gnorm = lp_norm(g, rc, mesh);
    }
    sol.objective = fval;
    sol.gradient_norm = gnorm;
    if (!sol.converged && gnorm <= tol * ref)
        sol.converged = true;
    return sol;
}

/// Resolvent, Moreau-Yosida envelope and Yosida approximation at one point.
struct MoreauYosida {
    Field resolvent;       // J_lambda u
    double envelope = 0.0; // phi_lambda(u)
    Field yosida_grad;     // -F(J_lambda u - u)/lambda, an element of d phi(J_lambda u)
    double inner_residual = 0.0;
    int inner_iterations = 0;
};

/// J_lambda u = argmin_v |u - v|_r^2/(2 lambda) + E(v), computed as the prox
/// with scale lambda (the minimiser is the same). Throws SolverFailure when
/// the inner Newton iteration does not converge.
template <SliceFunctional E>
MoreauYosida moreau_yosida(std::span<const double> u, double lambda, const E& energy, double r,
                           const SpatialMesh& mesh, double tol = 1e-13, std::span<const double> start = {})
{
    if (!(lambda > 0.0))
        throw ConfigError("Moreau-Yosida parameter must be positive", "cascade.lambda_schedule");
    require_finite(u, "field");
    // |u-v|^2/(2 lambda) + E(v)  has the minimiser of  |v-u|^2/2 + lambda E(v).
    const ProxSolution sol = slice_prox(energy, u, {}, lambda, r, mesh, tol, 200, start);
    if (!sol.converged)
        throw SolverFailure("Moreau-Yosida inner minimiser did not converge (gradient norm " +
                                std::to_string(sol.gradient_norm) + ")",
                            sol.gradient_norm);
    MoreauYosida my;
    my.resolvent = sol.v;
    my.inner_residual = sol.gradient_norm;
    my.inner_iterations = sol.iterations;
    Field diff(u.size());
    for (std::size_t i = 0; i < u.size(); ++i)
        diff[i] = my.resolvent[i] - u[i];
    const double dn = lp_norm(diff, r, mesh);
    my.envelope = dn * dn / (2.0 * lambda) + energy.value(my.resolvent);
    my.yosida_grad = duality_map(diff, r, mesh);
    for (double& x : my.yosida_grad)
        x = -x / lambda;
    return my;
}

/// Jacobian of the Yosida approximation u -> -F(J u - u)/lambda at the point
/// described by `my`: G/l - (G/l)(G/l + H)^{-1}(G/l), G the duality Jacobian
/// at J u - u and H the Jacobian of grad E at J u.
template <SliceFunctional E>
Eigen::MatrixXd envelope_hessian(std::span<const double> u, const MoreauYosida& my, double lambda, const E& energy,
                                 double r, const SpatialMesh& mesh)
{
    Field diff(u.size());
    for (std::size_t i = 0; i < u.size(); ++i)
        diff[i] = my.resolvent[i] - u[i];
    const Eigen::MatrixXd G = dense(duality_jacobian(diff, r, mesh)) / lambda;
    const Eigen::MatrixXd B = G + energy.hessian(my.resolvent);
    Eigen::MatrixXd out = G - G * B.ldlt().solve(G);
    return 0.5 * (out + out.transpose());
}

// ---------------------------------------------------------------------------
// Resolvent of the power-perturbed functional
// ---------------------------------------------------------------------------

struct PowerResolvent {
    Field u;
    double lambda = 0.0;   // fixed point lambda* = mu phi^alpha(u)
    double residual = 0.0; // |g(lambda*)|
    int bisections = 0;
    bool bracket_violated = false;
};

/// Solves F_r(u - w) + (1 + mu phi(u)^alpha) d phi(u) = wstar. The
/// auxiliary problem F_r(u_l - w) + (1 + l) d phi(u_l) = wstar is a convex
/// minimisation for each l >= 0; l -> mu phi^alpha(u_l) is nonincreasing, so
/// g(l) = mu phi^alpha(u_l) - l has its root in [0, mu phi^alpha(u_0)] and is
/// found by bisection. `phi_energy` must be the unperturbed functional.
template <SliceFunctional E>
PowerResolvent resolvent_phi_power(std::span<const double> w, std::span<const double> wstar,
                                   const PerturbedFunctional& pf, const E& phi_energy, double r,
                                   const SpatialMesh& mesh, double tol, double inner_tol = 1e-14)
{
    if (!(tol > 0.0))
        throw ConfigError("resolvent tolerance must be positive");
    if (!(pf.mu >= 0.0) || !(pf.alpha_exp > 0.0))
        throw ConfigError("invalid perturbation parameters");
    auto solve_aux = [&](double lam, std::span<const double> start) {
        const ProxSolution s = slice_prox(phi_energy, w, wstar, 1.0 + lam, r, mesh, inner_tol, 200, start);
        if (!s.converged)
            throw SolverFailure("auxiliary resolvent problem did not converge", s.gradient_norm);
        return s.v;
    };
    auto gamma = [&](const Field& u) { return pf.mu * std::pow(phi_energy.value(u), pf.alpha_exp); };

    PowerResolvent out;
    Field u0 = solve_aux(0.0, {});
    const double hi0 = gamma(u0);
    if (pf.mu == 0.0 || hi0 <= tol) {
        out.u = u0;
        out.lambda = 0.0;
        out.residual = hi0;
        return out;
    }
    double lo = 0.0, hi = hi0;
    Field u_hi = solve_aux(hi, u0);
    if (gamma(u_hi) - hi > tol)
        out.bracket_violated = true; // monotonicity says g(hi) <= 0; noise otherwise
    Field u_mid = u0;
    double g_mid = hi0;
    for (out.bisections = 0; out.bisections < 200; ++out.bisections) {
        const double mid = 0.5 * (lo + hi);
        u_mid = solve_aux(mid, u_mid);
        g_mid = gamma(u_mid) - mid;
        if (std::abs(g_mid) <= tol || hi - lo <= tol * 1e-3) {
            out.lambda = mid;
            break;
        }
        if (g_mid > 0.0)
            lo = mid;
        else
            hi = mid;
        out.lambda = mid;
    }
    out.u = u_mid;
    out.residual = std::abs(g_mid);
    return out;
}

} // namespace dnp
