#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "dnp/mesh.hpp"

namespace dnp {

struct PrimalTag {};
struct DualTag {};

/// N x M space-time grid, slice n holding the field at t_n = n dt. Slice N is
/// slice 0: periodicity lives in the index arithmetic, never in the data.
///
/// The tag separates primal trajectories (u) from dual ones (forcing, h, xi,
/// eta) so the two cannot be mixed by accident; `retag` is the explicit
/// identification used where the Riesz-type pairing makes it meaningful.
template <class Tag>
class Trajectory {
public:
    Trajectory() = default;
    Trajectory(std::size_t steps, std::size_t nodes, double value = 0.0)
        : steps_(steps), nodes_(nodes), data_(steps * nodes, value) {}

    std::size_t steps() const noexcept { return steps_; }
    std::size_t nodes() const noexcept { return nodes_; }

    std::span<double> slice(std::size_t n) { return {data_.data() + n * nodes_, nodes_}; }
    std::span<const double> slice(std::size_t n) const { return {data_.data() + n * nodes_, nodes_}; }

    double& operator()(std::size_t n, std::size_t i) { return data_[n * nodes_ + i]; }
    double operator()(std::size_t n, std::size_t i) const { return data_[n * nodes_ + i]; }

    std::vector<double>& raw() noexcept { return data_; }
    const std::vector<double>& raw() const noexcept { return data_; }

    template <class Other>
    Trajectory<Other> retag() const
    {
        Trajectory<Other> out(steps_, nodes_);
        out.raw() = data_;
        return out;
    }

    Trajectory& operator+=(const Trajectory& o)
    {
        for (std::size_t k = 0; k < data_.size(); ++k)
            data_[k] += o.data_[k];
        return *this;
    }
    Trajectory& operator-=(const Trajectory& o)
    {
        for (std::size_t k = 0; k < data_.size(); ++k)
            data_[k] -= o.data_[k];
        return *this;
    }
    Trajectory& operator*=(double s)
    {
        for (double& x : data_)
            x *= s;
        return *this;
    }
    friend Trajectory operator+(Trajectory a, const Trajectory& b) { return a += b; }
    friend Trajectory operator-(Trajectory a, const Trajectory& b) { return a -= b; }
    friend Trajectory operator*(double s, Trajectory a) { return a *= s; }

    bool operator==(const Trajectory&) const = default;

private:
    std::size_t steps_ = 0;
    std::size_t nodes_ = 0;
    std::vector<double> data_;
};

using PeriodicTrajectory = Trajectory<PrimalTag>;
using DualTrajectory = Trajectory<DualTag>;

template <class Tag>
void require_shape(const Trajectory<Tag>& u, const SpatialMesh& smesh, const TemporalMesh& tmesh, const char* what)
{
    if (u.steps() != tmesh.size() || u.nodes() != smesh.size())
        throw InvalidInput(std::string(what) + ": shape " + std::to_string(u.steps()) + "x" +
                           std::to_string(u.nodes()) + " does not match the meshes " +
                           std::to_string(tmesh.size()) + "x" + std::to_string(smesh.size()));
}

/// Backward difference (u_n - u_{n-1 mod N})/dt. Summing the output over one
/// period telescopes to the zero field.
inline PeriodicTrajectory time_derivative(const PeriodicTrajectory& u, const TemporalMesh& tmesh)
{
    const std::size_t N = u.steps();
    const double inv = 1.0 / tmesh.dt();
    PeriodicTrajectory d(N, u.nodes());
    for (std::size_t n = 0; n < N; ++n) {
        auto cur = u.slice(n);
        auto prev = u.slice(tmesh.prev(n));
        auto out = d.slice(n);
        for (std::size_t i = 0; i < u.nodes(); ++i)
            out[i] = (cur[i] - prev[i]) * inv;
    }
    return d;
}

/// Bochner norm (sum_n dt |u_n|^r)^(1/r), or max_n |u_n| for r = inf, of an
/// arbitrary spatial norm.
template <class Tag>
double bochner_norm(const Trajectory<Tag>& u,
                    const std::function<double(std::span<const double>)>& spatial_norm,
                    double r, const TemporalMesh& tmesh)
{
    if (!(r >= 1.0))
        throw ConfigError("Bochner exponent must be >= 1");
    const std::size_t N = u.steps();
    if (std::isinf(r)) {
        double m = 0.0;
        for (std::size_t n = 0; n < N; ++n)
            m = std::max(m, spatial_norm(u.slice(n)));
        return m;
    }
    std::vector<double> norms(N);
    double nmax = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
        norms[n] = spatial_norm(u.slice(n));
        nmax = std::max(nmax, norms[n]);
    }
    if (nmax == 0.0)
        return 0.0;
    double s = 0.0;
    for (double v : norms)
        s += std::pow(v / nmax, r);
    return nmax * std::pow(tmesh.dt() * s, 1.0 / r);
}

/// L^r(0,T; L^q(Omega)) norm, the common special case of `bochner_norm`.
template <class Tag>
double lebesgue_bochner_norm(const Trajectory<Tag>& u, double q, double r, const SpatialMesh& smesh,
                             const TemporalMesh& tmesh)
{
    return bochner_norm(u, [&](std::span<const double> s) { return lp_norm(s, q, smesh); }, r, tmesh);
}

/// sum_n dt <xi_n, u_n>.
inline double space_time_pairing(const DualTrajectory& xi, const PeriodicTrajectory& u, const SpatialMesh& smesh,
                                  const TemporalMesh& tmesh)
{
    double s = 0.0;
    for (std::size_t n = 0; n < u.steps(); ++n)
        s += pairing(xi.slice(n), u.slice(n), smesh);
    return tmesh.dt() * s;
}

} // namespace dnp
