#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dnp/error.hpp"

namespace dnp {

/// Nodal values on the interior nodes of a spatial mesh (primal or dual).
using Field = std::vector<double>;

/// Uniform mesh of [0, L] with M interior nodes and homogeneous Dirichlet
/// ghosts at x = 0 and x = L. Node i (0-based) sits at (i+1)·dx, cell j
/// (0..M) spans [j·dx, (j+1)·dx].
class SpatialMesh {
public:
    SpatialMesh(double length, std::size_t interior_count)
        : length_(length), count_(interior_count)
    {
        if (!(length > 0.0) || !std::isfinite(length))
            throw ConfigError("domain length must be positive", "problem.L");
        if (interior_count < 1)
            throw ConfigError("at least one interior node is required", "problem.M");
    }

    double length() const noexcept { return length_; }
    std::size_t size() const noexcept { return count_; }
    std::size_t cells() const noexcept { return count_ + 1; }
    double dx() const noexcept { return length_ / static_cast<double>(count_ + 1); }
    double node(std::size_t i) const noexcept { return static_cast<double>(i + 1) * dx(); }
    double cell_midpoint(std::size_t j) const noexcept { return (static_cast<double>(j) + 0.5) * dx(); }

private:
    double length_;
    std::size_t count_;
};

/// Uniform periodic time mesh of [0, T) with N steps; index arithmetic wraps.
class TemporalMesh {
public:
    TemporalMesh(double period, std::size_t step_count)
        : period_(period), steps_(step_count)
    {
        if (!(period > 0.0) || !std::isfinite(period))
            throw ConfigError("period must be positive", "problem.T");
        if (step_count < 2)
            throw ConfigError("at least two time steps are required", "problem.N");
    }

    double period() const noexcept { return period_; }
    std::size_t size() const noexcept { return steps_; }
    double dt() const noexcept { return period_ / static_cast<double>(steps_); }
    double time(std::size_t n) const noexcept { return static_cast<double>(n) * dt(); }
    std::size_t prev(std::size_t n) const noexcept { return n == 0 ? steps_ - 1 : n - 1; }
    std::size_t next(std::size_t n) const noexcept { return n + 1 == steps_ ? 0 : n + 1; }

private:
    double period_;
    std::size_t steps_;
};

inline void require_finite(std::span<const double> v, const char* what)
{
    for (double x : v)
        if (!std::isfinite(x))
            throw InvalidInput(std::string(what) + " contains non-finite values");
}

inline void require_size(std::span<const double> v, std::size_t n, const char* what)
{
    if (v.size() != n)
        throw InvalidInput(std::string(what) + ": expected " + std::to_string(n) +
                           " values, got " + std::to_string(v.size()));
}

/// Hölder conjugate r/(r-1).
inline double conjugate_exponent(double r) { return r / (r - 1.0); }

/// Nodal-rule pairing <xi, u> = sum_i dx xi_i u_i.
inline double pairing(std::span<const double> xi, std::span<const double> u, const SpatialMesh& mesh)
{
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i)
        s += xi[i] * u[i];
    return mesh.dx() * s;
}

/// Discrete L^r norm (sum_i dx |v_i|^r)^(1/r) with the nodal rule. Only the
/// interior nodes carry weight, so v = 1 on [0, L] has norm (M dx)^(1/r).
inline double lp_norm(std::span<const double> v, double r, const SpatialMesh& mesh)
{
    if (r == 2.0) {
        double s = 0.0;
        for (double x : v)
            s += x * x;
        return std::sqrt(mesh.dx() * s);
    }
    double vmax = 0.0;
    for (double x : v)
        vmax = std::max(vmax, std::abs(x));
    if (vmax == 0.0)
        return 0.0;
    double s = 0.0;
    for (double x : v)
        s += std::pow(std::abs(x) / vmax, r);
    return vmax * std::pow(mesh.dx() * s, 1.0 / r);
}

/// |v|_V for V = L^p.
inline double norm_V(std::span<const double> v, double p, const SpatialMesh& mesh)
{
    return lp_norm(v, p, mesh);
}

/// |xi|_{V*} for V* = L^{p'}; takes the conjugate exponent directly.
inline double norm_Vstar(std::span<const double> xi, double p_conj, const SpatialMesh& mesh)
{
    return lp_norm(xi, p_conj, mesh);
}

/// Forward cell differences (u_{j+1} - u_j)/dx for j = 0..M with zero ghosts.
inline Field cell_gradient(std::span<const double> u, const SpatialMesh& mesh)
{
    const std::size_t M = mesh.size();
    const double inv = 1.0 / mesh.dx();
    Field d(M + 1);
    for (std::size_t j = 0; j <= M; ++j) {
        const double left = j == 0 ? 0.0 : u[j - 1];
        const double right = j == M ? 0.0 : u[j];
        d[j] = (right - left) * inv;
    }
    return d;
}

/// |v|_X for X = W^{1,m}_0: (sum_cells dx |Dv_j|^m)^(1/m).
inline double norm_X(std::span<const double> v, double m, const SpatialMesh& mesh)
{
    const Field d = cell_gradient(v, mesh);
    return lp_norm(d, m, mesh);
}

} // namespace dnp
