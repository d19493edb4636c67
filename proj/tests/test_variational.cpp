#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "dnp/forcing.hpp"
#include "dnp/variational.hpp"
#include "oracles.hpp"

using namespace dnp;

namespace {

ProblemSpec make_spec(double p, double m, std::size_t M, std::size_t N, ForcingSpec fs = ForcingSpec::zero())
{
    SpatialMesh s(1.0, M);
    TemporalMesh t(1.0, N);
    return ProblemSpec{p, m, Nonlinearity::power(p), DiffusionField::constant(s, 1.0), sample_forcing(fs, s, t), s, t};
}

template <class Tag>
Trajectory<Tag> random_trajectory(std::size_t N, std::size_t M, std::uint64_t seed, double amp = 1.0)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(-amp, amp);
    Trajectory<Tag> u(N, M);
    for (double& x : u.raw())
        x = uni(rng);
    return u;
}

ObjectiveConfig config(double eps, double lam, DualTrajectory g)
{
    ObjectiveConfig c;
    c.epsilon = eps;
    c.lambda = lam;
    c.f_plus_h = std::move(g);
    c.delta = 1e-6;
    return c;
}

const ForcingSpec kSine = ForcingSpec::sinusoids({{1.0, 1, 1, 0.0}, {0.5, 2, 0, 0.0}});

} // namespace

TEST(Objective, ZeroAtOrigin)
{
    const ProblemSpec spec = make_spec(2.5, 3.0, 6, 5);
    for (double lam : {0.0, 0.1})
        EXPECT_EQ(assemble_objective(PeriodicTrajectory(5, 6), config(0.3, lam, DualTrajectory(5, 6)), spec), 0.0);
}

TEST(Objective, LinearTerm)
{
    const ProblemSpec spec = make_spec(3.0, 2.0, 6, 5);
    const auto u = random_trajectory<PrimalTag>(5, 6, 1);
    const auto g = random_trajectory<DualTag>(5, 6, 2, 3.0);
    const double a = assemble_objective(u, config(0.2, 0.05, g), spec);
    const double b = assemble_objective(u, config(0.2, 0.05, DualTrajectory(5, 6)), spec);
    EXPECT_NEAR(a - b, -space_time_pairing(g, u, spec.smesh, spec.tmesh), 1e-12 * std::max(1.0, std::abs(a)));
}

TEST(Objective, GradientFiniteDifferences)
{
    for (auto [p, m] : {std::pair{2.0, 2.0}, {2.5, 3.0}, {3.0, 2.0}}) {
        const ProblemSpec spec = make_spec(p, m, 6, 5);
        const auto u = random_trajectory<PrimalTag>(5, 6, 3);
        const auto g = random_trajectory<DualTag>(5, 6, 4);
        const ObjectiveConfig cfg = config(0.1, 0.05, g);
        const DualTrajectory G = objective_gradient(u, cfg, spec);
        const auto fd = oracle::fd_gradient(
            [&](const std::vector<double>& v) {
                PeriodicTrajectory w(5, 6);
                w.raw() = v;
                return assemble_objective(w, cfg, spec);
            },
            u.raw(), 1e-6);
        for (std::size_t k = 0; k < fd.size(); ++k)
            EXPECT_NEAR(G.raw()[k] * spec.smesh.dx(), fd[k], 1e-6 * std::max(1.0, std::abs(fd[k])))
                << "p=" << p << " m=" << m << " k=" << k;
    }
}

TEST(Objective, ShiftChangesGradientByDtC)
{
    const ProblemSpec spec = make_spec(2.5, 3.0, 6, 5);
    const auto u = random_trajectory<PrimalTag>(5, 6, 5);
    const auto g = random_trajectory<DualTag>(5, 6, 6);
    DualTrajectory g2 = g;
    for (double& x : g2.raw())
        x += 0.75;
    const DualTrajectory a = objective_gradient(u, config(0.1, 0.0, g), spec);
    const DualTrajectory b = objective_gradient(u, config(0.1, 0.0, g2), spec);
    for (std::size_t k = 0; k < a.raw().size(); ++k)
        EXPECT_NEAR(b.raw()[k] - a.raw()[k], -spec.tmesh.dt() * 0.75, 1e-13);
}

TEST(Objective, LinearZeroMatchesCyclicSolve)
{
    const ProblemSpec spec = make_spec(2.0, 2.0, 9, 8, kSine);
    const double eps = 0.3;
    const PeriodicTrajectory ref = oracle::cyclic_linear_solve(spec.f, std::vector<double>(10, 1.0), 1.0, 1.0, 0.0, eps);
    const DualTrajectory G = objective_gradient(ref, config(eps, 0.0, spec.f), spec);
    double worst = 0.0;
    for (double x : G.raw())
        worst = std::max(worst, std::abs(x));
    EXPECT_LT(worst, 1e-12);
}

TEST(Minimize, ZeroData)
{
    const ProblemSpec spec = make_spec(2.5, 3.0, 8, 8);
    const auto u0 = random_trajectory<PrimalTag>(8, 8, 9);
    const MinimizeResult r = minimize(config(0.1, 0.0, DualTrajectory(8, 8)), spec, u0, 1e-12, 200);
    EXPECT_TRUE(r.report.converged);
    EXPECT_LT(lebesgue_bochner_norm(r.u, 2.5, 2.5, spec.smesh, spec.tmesh), 1e-10);
}

TEST(Minimize, UniqueFromDistinctStarts)
{
    for (auto [p, m] : {std::pair{2.5, 3.0}, {3.0, 2.0}, {2.0, 1.5}}) {
        const ProblemSpec spec = make_spec(p, m, 8, 8, kSine);
        const ObjectiveConfig cfg = config(0.05, 0.0, spec.f);
        const double tol = 1e-10;
        const MinimizeResult a = minimize(cfg, spec, random_trajectory<PrimalTag>(8, 8, 10, 2.0), tol, 300);
        const MinimizeResult b = minimize(cfg, spec, random_trajectory<PrimalTag>(8, 8, 11, 0.1), tol, 300);
        ASSERT_TRUE(a.report.converged && b.report.converged);
        PeriodicTrajectory d = a.u;
        d -= b.u;
        EXPECT_LE(lebesgue_bochner_norm(d, p, p, spec.smesh, spec.tmesh), 10.0 * tol) << p << " " << m;
    }
}

TEST(Minimize, LinearMatchesCyclicSolve)
{
    const ProblemSpec spec = make_spec(2.0, 2.0, 15, 16, kSine);
    for (double eps : {1.0, 1e-2, 1e-4}) {
        const PeriodicTrajectory ref =
            oracle::cyclic_linear_solve(spec.f, std::vector<double>(16, 1.0), 1.0, 1.0, 0.0, eps);
        const MinimizeResult r = minimize(config(eps, 0.0, spec.f), spec, PeriodicTrajectory(16, 15), 1e-13, 100);
        ASSERT_TRUE(r.report.converged);
        EXPECT_LT(oracle::max_abs_diff(r.u, ref), 1e-8) << eps;
    }
}

TEST(Minimize, GradientBelowToleranceAtMinimizer)
{
    const ProblemSpec spec = make_spec(2.5, 3.0, 10, 8, kSine);
    const ObjectiveConfig cfg = config(0.1, 0.0, spec.f);
    const MinimizeResult r = minimize(cfg, spec, PeriodicTrajectory(8, 10), 1e-10, 200);
    ASSERT_TRUE(r.report.converged);
    EXPECT_LE(r.report.final_gradient_norm,
              1e-10 * std::max(1.0, lebesgue_bochner_norm(spec.f, 2.5 / 1.5, 2.5 / 1.5, spec.smesh, spec.tmesh)));
}

TEST(Residual, ZeroData)
{
    const ProblemSpec spec = make_spec(2.5, 3.0, 6, 6);
    const PeriodicTrajectory u(6, 6);
    EXPECT_EQ(residual_AP(u, eta_of(u, spec, 1e-6), spec), 0.0);
}

TEST(Residual, ManufacturedDiscreteSolution)
{
    ProblemSpec spec = make_spec(2.5, 3.0, 12, 10);
    PeriodicTrajectory u(10, 12);
    for (std::size_t n = 0; n < 10; ++n)
        for (std::size_t i = 0; i < 12; ++i)
            u(n, i) = std::sin(std::numbers::pi * spec.smesh.node(i)) *
                      std::cos(2.0 * std::numbers::pi * spec.tmesh.time(n));
    DualTrajectory f = xi_of(u, spec);
    f += eta_of(u, spec, 1e-6);
    spec.f = f;
    EXPECT_LT(residual_AP(u, eta_of(u, spec, 1e-6), spec), 1e-12);
}
