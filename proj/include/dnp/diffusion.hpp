#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dnp/error.hpp"
#include "dnp/mesh.hpp"

namespace dnp {

/// Cell-midpoint diffusion coefficients a_{j+1/2}, j = 0..M, with the bounds
/// a1 <= a <= a2 of the uniform ellipticity assumption.
class DiffusionField {
public:
    DiffusionField() = default;

    explicit DiffusionField(std::vector<double> midpoint_values)
        : values_(std::move(midpoint_values))
    {
        if (values_.empty())
            throw ConfigError("diffusion field needs at least one cell", "problem.diffusion");
        require_finite(values_, "diffusion field");
        lower_ = *std::min_element(values_.begin(), values_.end());
        upper_ = *std::max_element(values_.begin(), values_.end());
        if (!(lower_ > 0.0))
            throw ConfigError("diffusion coefficient must be bounded below by a positive constant",
                              "problem.diffusion");
    }

    DiffusionField(std::vector<double> midpoint_values, double a1, double a2)
        : DiffusionField(std::move(midpoint_values))
    {
        if (!(a1 > 0.0) || a1 > lower_ || upper_ > a2)
            throw ConfigError("diffusion coefficient violates the bounds a1 <= a <= a2", "problem.diffusion");
        lower_ = a1;
        upper_ = a2;
    }

    static DiffusionField constant(const SpatialMesh& mesh, double value)
    {
        return DiffusionField(std::vector<double>(mesh.cells(), value));
    }

    std::span<const double> values() const noexcept { return values_; }
    double operator[](std::size_t j) const { return values_[j]; }
    std::size_t cells() const noexcept { return values_.size(); }
    double lower_bound() const noexcept { return lower_; }
    double upper_bound() const noexcept { return upper_; }

private:
    std::vector<double> values_;
    double lower_ = 0.0;
    double upper_ = 0.0;
};

namespace detail {

inline void check_phi_inputs(std::span<const double> u, const DiffusionField& a, double m, double delta,
                             const SpatialMesh& mesh)
{
    if (!(m > 1.0) || !std::isfinite(m))
        throw ConfigError("diffusion exponent must be > 1", "problem.m");
    if (!(delta >= 0.0))
        throw ConfigError("gradient smoothing must be >= 0", "cascade.delta");
    require_size(u, mesh.size(), "field");
    if (a.cells() != mesh.cells())
        throw InvalidInput("diffusion field does not match the mesh");
    require_finite(u, "field");
}

/// Smoothed flux q(z) = (z^2 + delta^2)^{(m-2)/2} z.
inline double smoothed_flux(double z, double m, double delta)
{
    if (m == 2.0)
        return z;
    const double r2 = z * z + delta * delta;
    if (r2 == 0.0)
        return 0.0;
    return std::pow(r2, 0.5 * (m - 2.0)) * z;
}

/// q'(z) = (z^2 + delta^2)^{(m-4)/2} ((m-1) z^2 + delta^2).
inline double smoothed_flux_slope(double z, double m, double delta)
{
    if (m == 2.0)
        return 1.0;
    const double r2 = z * z + delta * delta;
    if (r2 == 0.0)
        return m > 2.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return std::pow(r2, 0.5 * (m - 4.0)) * ((m - 1.0) * z * z + delta * delta);
}

} // namespace detail

/// phi(u) = (1/m) sum_cells dx a_{j+1/2} [((Du_j)^2 + delta^2)^{m/2} - delta^m], Dirichlet
/// ghosts. The offset keeps phi(0) = 0 and does not change the gradient.
inline double eval_phi(std::span<const double> u, const DiffusionField& a, double m, double delta,
                       const SpatialMesh& mesh)
{
    detail::check_phi_inputs(u, a, m, delta, mesh);
    const Field d = cell_gradient(u, mesh);
    double s = 0.0;
    for (std::size_t j = 0; j < d.size(); ++j) {
        const double z2 = d[j] * d[j];
        double v;
        if (m == 2.0)
            v = z2;
        else if (delta == 0.0)
            v = std::pow(z2, 0.5 * m);
        else // (z^2 + d^2)^{m/2} - d^m without cancellation for small z
            v = std::pow(delta, m) * std::expm1(0.5 * m * std::log1p(z2 / (delta * delta)));
        s += a[j] * v;
    }
    return mesh.dx() * s / m;
}

/// Negative weighted m-Laplacian, the gradient of eval_phi under the pairing:
/// -(1/dx)[a_{i+1/2} q(Du_i) - a_{i-1/2} q(Du_{i-1})].
inline Field grad_phi(std::span<const double> u, const DiffusionField& a, double m, double delta,
                      const SpatialMesh& mesh)
{
    detail::check_phi_inputs(u, a, m, delta, mesh);
    const Field d = cell_gradient(u, mesh);
    Field flux(d.size());
    for (std::size_t j = 0; j < d.size(); ++j) {
        if (delta == 0.0 && m < 2.0 && d[j] == 0.0)
            throw SingularityError("unsmoothed m-Laplacian with m < 2 at a vanishing gradient");
        flux[j] = a[j] * detail::smoothed_flux(d[j], m, delta);
    }
    const double inv = 1.0 / mesh.dx();
    Field g(u.size());
    for (std::size_t i = 0; i < u.size(); ++i)
        g[i] = -(flux[i + 1] - flux[i]) * inv;
    return g;
}

/// Tridiagonal Jacobian of grad_phi: diag[i] and off[i] = d g_i / d u_{i+1}.
struct Tridiagonal {
    std::vector<double> diag;
    std::vector<double> off;
};

inline Tridiagonal phi_curvature(std::span<const double> u, const DiffusionField& a, double m, double delta,
                                 const SpatialMesh& mesh)
{
    const Field d = cell_gradient(u, mesh);
    const double inv2 = 1.0 / (mesh.dx() * mesh.dx());
    std::vector<double> c(d.size());
    for (std::size_t j = 0; j < d.size(); ++j)
        c[j] = a[j] * detail::smoothed_flux_slope(d[j], m, delta) * inv2;
    Tridiagonal t;
    t.diag.resize(u.size());
    t.off.resize(u.size() > 0 ? u.size() - 1 : 0);
    for (std::size_t i = 0; i < u.size(); ++i)
        t.diag[i] = c[i] + c[i + 1];
    for (std::size_t i = 0; i + 1 < u.size(); ++i)
        t.off[i] = -c[i + 1];
    return t;
}

/// Exponent pair of the power perturbation Phi = phi + mu/(1+alpha) phi^{1+alpha}.
struct PerturbedFunctional {
    double mu = 0.0;
    double alpha_exp = 1.0;

    void validate() const
    {
        if (!(mu >= 0.0 && mu < 1.0))
            throw ConfigError("mu must lie in (0,1)", "cascade.mu_schedule");
        if (!(alpha_exp > 0.0))
            throw ConfigError("perturbation exponent must be positive", "cascade.alpha_exp");
    }

    /// Admissible in the m <= p regime: alpha_exp > p/m - 1.
    bool admissible_for(double p, double m) const { return alpha_exp > p / m - 1.0; }
};

/// Value and gradient of Phi; grad = (1 + mu phi^alpha) grad_phi.
struct PowerEvaluation {
    double value = 0.0;
    double phi = 0.0;
    double scale = 1.0;
    Field grad;
};

inline PowerEvaluation phi_power_eval_grad(std::span<const double> u, const PerturbedFunctional& pf,
                                           const DiffusionField& a, double m, double delta,
                                           const SpatialMesh& mesh)
{
    PowerEvaluation e;
    e.phi = eval_phi(u, a, m, delta, mesh);
    const double phia = std::pow(e.phi, pf.alpha_exp);
    e.value = e.phi + pf.mu / (1.0 + pf.alpha_exp) * phia * e.phi;
    e.scale = 1.0 + pf.mu * phia;
    e.grad = grad_phi(u, a, m, delta, mesh);
    for (double& g : e.grad)
        g *= e.scale;
    return e;
}

/// phi or Phi on one time slice, bundled with everything needed to evaluate
/// it: the diffusion field, exponent, smoothing and optional perturbation.
/// Satisfies the `SliceFunctional` concept used by the proximal machinery.
class DiffusionEnergy {
public:
    DiffusionEnergy(DiffusionField a, double m, double delta, SpatialMesh mesh,
                    std::optional<PerturbedFunctional> perturbation = std::nullopt)
        : a_(std::move(a)), m_(m), delta_(delta), mesh_(mesh), pf_(perturbation)
    {
        if (!(m > 1.0) || !std::isfinite(m))
            throw ConfigError("diffusion exponent must be > 1", "problem.m");
        if (pf_)
            pf_->validate();
    }

    const DiffusionField& field() const noexcept { return a_; }
    double exponent() const noexcept { return m_; }
    double delta() const noexcept { return delta_; }
    const SpatialMesh& mesh() const noexcept { return mesh_; }
    const std::optional<PerturbedFunctional>& perturbation() const noexcept { return pf_; }
    bool perturbed() const noexcept { return pf_ && pf_->mu > 0.0; }

    double phi(std::span<const double> u) const { return eval_phi(u, a_, m_, delta_, mesh_); }
    Field phi_gradient(std::span<const double> u) const { return grad_phi(u, a_, m_, delta_, mesh_); }

    /// 1 + mu phi(u)^alpha (1 when unperturbed).
    double scale(std::span<const double> u) const
    {
        return perturbed() ? 1.0 + pf_->mu * std::pow(phi(u), pf_->alpha_exp) : 1.0;
    }

    double value(std::span<const double> u) const
    {
        const double v = phi(u);
        if (!perturbed())
            return v;
        return v + pf_->mu / (1.0 + pf_->alpha_exp) * std::pow(v, 1.0 + pf_->alpha_exp);
    }

    Field gradient(std::span<const double> u) const
    {
        Field g = phi_gradient(u);
        if (perturbed()) {
            const double s = scale(u);
            for (double& x : g)
                x *= s;
        }
        return g;
    }

    /// Tridiagonal part of the Jacobian of `gradient`, i.e. the scaled phi
    /// curvature. The rank-one term of Phi is left out.
    Tridiagonal curvature(std::span<const double> u) const
    {
        Tridiagonal t = phi_curvature(u, a_, m_, delta_, mesh_);
        if (perturbed()) {
            const double s = scale(u);
            for (double& x : t.diag)
                x *= s;
            for (double& x : t.off)
                x *= s;
        }
        return t;
    }

    /// Full Jacobian of `gradient` (pairing units), including the rank-one
    /// term mu alpha phi^{alpha-1} dx g g^T of Phi.
    Eigen::MatrixXd hessian(std::span<const double> u) const
    {
        const std::size_t M = u.size();
        Eigen::MatrixXd H = Eigen::MatrixXd::Zero(M, M);
        const Tridiagonal t = curvature(u);
        for (std::size_t i = 0; i < M; ++i) {
            H(i, i) = t.diag[i];
            if (i + 1 < M) {
                H(i, i + 1) = t.off[i];
                H(i + 1, i) = t.off[i];
            }
        }
        if (perturbed()) {
            const double v = phi(u);
            if (v > 0.0) {
                const Field g = phi_gradient(u);
                const Eigen::Map<const Eigen::VectorXd> gv(g.data(), M);
                const double c = pf_->mu * pf_->alpha_exp * std::pow(v, pf_->alpha_exp - 1.0) * mesh_.dx();
                H.noalias() += c * gv * gv.transpose();
            }
        }
        return H;
    }

private:
    DiffusionField a_;
    double m_;
    double delta_;
    SpatialMesh mesh_;
    std::optional<PerturbedFunctional> pf_;
};

} // namespace dnp
