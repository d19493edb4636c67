#pragma once

// Reference computations used by the tests. They share no code with the
// library beyond the trajectory container.

#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <vector>

#include "dnp/trajectory.hpp"

namespace oracle {

using cplx = std::complex<double>;

/// Solves the cyclic linear system, mode by mode in time,
///   (c_k I + A) u_hat_k = g_hat_k,  c_k = time_coef * z_k + eps * (2 - w_k z_k),
/// where A = -d/dx(a d/dx) is the 3-point Dirichlet stiffness (a given at
/// cell midpoints), z_k = (1 - e^{-i theta_k})/dt is the symbol of the
/// backward difference and w_k = (e^{i theta_k} - 1)/dt that of the forward
/// one. time_coef = 1, eps = 0 is the periodic heat equation u' + Au = g.
inline dnp::PeriodicTrajectory cyclic_linear_solve(const dnp::DualTrajectory& g, const std::vector<double>& a,
                                                    double L, double T, double time_coef, double eps)
{
    const std::size_t N = g.steps(), M = g.nodes();
    const double dx = L / static_cast<double>(M + 1), dt = T / static_cast<double>(N);
    const double two_pi = 2.0 * std::numbers::pi;

    // Forward DFT in time, node by node.
    std::vector<cplx> gh(N * M);
    for (std::size_t k = 0; k < N; ++k)
        for (std::size_t n = 0; n < N; ++n) {
            const cplx e = std::polar(1.0, -two_pi * static_cast<double>(k * n % N) / static_cast<double>(N));
            for (std::size_t i = 0; i < M; ++i)
                gh[k * M + i] += g(n, i) * e;
        }

    std::vector<cplx> uh(N * M);
    std::vector<cplx> diag(M), rhs(M), cp(M), dp(M);
    std::vector<double> off(M > 0 ? M - 1 : 0);
    for (std::size_t i = 0; i + 1 < M; ++i)
        off[i] = -a[i + 1] / (dx * dx);
    for (std::size_t k = 0; k < N; ++k) {
        const double th = two_pi * static_cast<double>(k) / static_cast<double>(N);
        const cplx z = (1.0 - std::polar(1.0, -th)) / dt;
        const cplx w = (std::polar(1.0, th) - 1.0) / dt;
        const cplx c = time_coef * z + eps * (2.0 - w * z);
        for (std::size_t i = 0; i < M; ++i) {
            diag[i] = c + (a[i] + a[i + 1]) / (dx * dx);
            rhs[i] = gh[k * M + i];
        }
        // Thomas algorithm (complex, symmetric off-diagonals).
        cp[0] = M > 1 ? off[0] / diag[0] : 0.0;
        dp[0] = rhs[0] / diag[0];
        for (std::size_t i = 1; i < M; ++i) {
            const cplx den = diag[i] - off[i - 1] * cp[i - 1];
            cp[i] = i + 1 < M ? off[i] / den : 0.0;
            dp[i] = (rhs[i] - off[i - 1] * dp[i - 1]) / den;
        }
        uh[k * M + M - 1] = dp[M - 1];
        for (std::size_t i = M - 1; i-- > 0;)
            uh[k * M + i] = dp[i] - cp[i] * uh[k * M + i + 1];
    }

    dnp::PeriodicTrajectory u(N, M);
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t i = 0; i < M; ++i) {
            cplx s = 0.0;
            for (std::size_t k = 0; k < N; ++k)
                s += uh[k * M + i] * std::polar(1.0, two_pi * static_cast<double>(k * n % N) / static_cast<double>(N));
            u(n, i) = s.real() / static_cast<double>(N);
        }
    return u;
}

/// Central finite differences of fn at u, step h.
inline std::vector<double> fd_gradient(const std::function<double(const std::vector<double>&)>& fn,
                                       std::vector<double> u, double h)
{
    std::vector<double> g(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double keep = u[i];
        u[i] = keep + h;
        const double fp = fn(u);
        u[i] = keep - h;
        const double fm = fn(u);
        u[i] = keep;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

/// Root of a continuous fn with fn(lo), fn(hi) of opposite sign.
inline double bisect(const std::function<double(double)>& fn, double lo, double hi, double tol)
{
    double flo = fn(lo);
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        const double fm = fn(mid);
        if ((fm > 0) == (flo > 0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

/// max_n sqrt(sum_i dx (u - v)^2) / max_n sqrt(sum_i dx v^2): relative
/// L-infinity-in-time, L2-in-space distance.
inline double rel_linf_l2(const dnp::PeriodicTrajectory& u, const dnp::PeriodicTrajectory& v, double dx)
{
    double num = 0.0, den = 0.0;
    for (std::size_t n = 0; n < u.steps(); ++n) {
        double a = 0.0, b = 0.0;
        for (std::size_t i = 0; i < u.nodes(); ++i) {
            a += dx * (u(n, i) - v(n, i)) * (u(n, i) - v(n, i));
            b += dx * v(n, i) * v(n, i);
        }
        num = std::max(num, std::sqrt(a));
        den = std::max(den, std::sqrt(b));
    }
    return den > 0.0 ? num / den : num;
}

inline double max_abs_diff(const dnp::PeriodicTrajectory& u, const dnp::PeriodicTrajectory& v)
{
    double m = 0.0;
    for (std::size_t k = 0; k < u.raw().size(); ++k)
        m = std::max(m, std::abs(u.raw()[k] - v.raw()[k]));
    return m;
}

} // namespace oracle
