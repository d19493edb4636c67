#pragma once

#include <cmath>
#include <utility>

#include "dnp/diffusion.hpp"
#include "dnp/error.hpp"
#include "dnp/mesh.hpp"
#include "dnp/nonlinearity.hpp"
#include "dnp/trajectory.hpp"

namespace dnp {

/// One discrete instance of alpha(u_t) - div(a |u_x|^{m-2} u_x) = f on
/// (0, L) x (0, T), Dirichlet in space, periodic in time.
struct ProblemSpec {
    double p;
    double m;
    Nonlinearity nl;
    DiffusionField a;
    DualTrajectory f;
    SpatialMesh smesh;
    TemporalMesh tmesh;

    void validate() const
    {
        if (!(p > 1.0) || !std::isfinite(p))
            throw ConfigError("exponent must be > 1", "problem.p");
        if (!(m > 1.0) || !std::isfinite(m))
            throw ConfigError("exponent must be > 1", "problem.m");
        if (std::abs(nl.p() - p) > 1e-12)
            throw ConfigError("nonlinearity growth exponent does not match p", "problem.nonlinearity");
        if (a.cells() != smesh.cells())
            throw ConfigError("diffusion field does not match the spatial mesh", "problem.diffusion");
        if (f.steps() != tmesh.size() || f.nodes() != smesh.size())
            throw ConfigError("forcing does not match the meshes", "problem.forcing");
        require_finite(f.raw(), "forcing");
    }

    /// m <= p: the regime handled by the power perturbation of phi.
    bool needs_mu_path() const noexcept { return m <= p; }
};

} // namespace dnp
