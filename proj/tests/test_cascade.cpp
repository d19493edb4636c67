#include <cmath>
#include <random>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "dnp/anderson.hpp"
#include "dnp/cascade.hpp"
#include "dnp/forcing.hpp"
#include "oracles.hpp"

using namespace dnp;

namespace {

const ForcingSpec kSine = ForcingSpec::sinusoids({{1.0, 1, 1, 0.0}, {0.5, 2, 0, 0.0}});

ProblemSpec make_spec(double p, double m, std::size_t M, std::size_t N, ForcingSpec fs = kSine)
{
    SpatialMesh s(1.0, M);
    TemporalMesh t(1.0, N);
    return ProblemSpec{p, m, Nonlinearity::power(p), DiffusionField::constant(s, 1.0), sample_forcing(fs, s, t), s, t};
}

double max_abs(const std::vector<double>& v)
{
    double m = 0.0;
    for (double x : v)
        m = std::max(m, std::abs(x));
    return m;
}

std::vector<double> ones(std::size_t cells) { return std::vector<double>(cells, 1.0); }

} // namespace

TEST(SolveAPh, ZeroData)
{
    const ProblemSpec spec = make_spec(2.5, 3.0, 8, 8, ForcingSpec::zero());
    const StageResult r = solve_APh(spec.f, DualTrajectory(8, 8), 0.1, CascadeParams{}, spec);
    EXPECT_EQ(max_abs(r.u.raw()), 0.0);
}

TEST(SolveAPh, LinearMatchesCyclicSolve)
{
    const ProblemSpec spec = make_spec(2.0, 2.0, 15, 16);
    DualTrajectory h(16, 15);
    for (std::size_t n = 0; n < 16; ++n)
        for (std::size_t i = 0; i < 15; ++i)
            h(n, i) = 0.3 * std::cos(static_cast<double>(n + i));
    DualTrajectory g = spec.f;
    g += h;
    for (double eps : {0.5, 1e-3}) {
        const StageResult r = solve_APh(spec.f, h, eps, CascadeParams{}, spec);
        const PeriodicTrajectory ref = oracle::cyclic_linear_solve(g, ones(16), 1.0, 1.0, 0.0, eps);
        EXPECT_LT(oracle::max_abs_diff(r.u, ref), 1e-8) << eps;
    }
}

TEST(SolveAPh, SymmetricDataIsDeterministic)
{
    const ProblemSpec spec = make_spec(2.0, 3.0, 10, 8);
    DualTrajectory h = spec.f;
    h *= -1.0;
    const StageResult a = solve_APh(spec.f, h, 0.1, CascadeParams{}, spec);
    const StageResult b = solve_APh(spec.f, h, 0.1, CascadeParams{}, spec);
    EXPECT_EQ(a.u, b.u);
    // f + h = 0: the unique minimizer is zero.
    EXPECT_LT(max_abs(a.u.raw()), 1e-12);
}

TEST(BetaMap, ZeroIsFixedForZeroData)
{
    const ProblemSpec spec = make_spec(2.5, 3.0, 6, 6, ForcingSpec::zero());
    const DualTrajectory b = beta_map(DualTrajectory(6, 6), spec.f, 0.1, CascadeParams{}, spec);
    EXPECT_EQ(max_abs(b.raw()), 0.0);
}

TEST(BetaMap, AffineFixedPointOnTinyGrid)
{
    // p = m = 2: beta(h) = c0 + B h. Assemble B column by column and solve
    // (I - B) h = c0 densely.
    const std::size_t M = 4, N = 4, n = M * N;
    const double eps = 0.2;
    CascadeParams params;
    const DualTrajectory zero(N, M);
    Eigen::VectorXd rhs(n);
    const ProblemSpec lin = make_spec(2.0, 2.0, M, N);
    const DualTrajectory c0 = beta_map(zero, lin.f, eps, params, lin);
    Eigen::MatrixXd B = Eigen::MatrixXd::Identity(n, n);
    for (std::size_t k = 0; k < n; ++k) {
        rhs(static_cast<Eigen::Index>(k)) = c0.raw()[k];
        DualTrajectory e(N, M);
        e.raw()[k] = 1.0;
        const DualTrajectory ck = beta_map(e, lin.f, eps, params, lin);
        for (std::size_t j = 0; j < n; ++j)
            B(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) -= ck.raw()[j] - c0.raw()[j];
    }
    const Eigen::VectorXd hstar = B.fullPivLu().solve(rhs);
    const StageResult r = fixed_point_solve(lin.f, eps, params, lin);
    ASSERT_TRUE(r.report.converged);
    for (std::size_t k = 0; k < n; ++k)
        EXPECT_NEAR(r.h.raw()[k], hstar(static_cast<Eigen::Index>(k)), 1e-8);
    // Affinity: beta at a combination equals the combination of values.
    DualTrajectory e1(N, M), e2(N, M);
    e1.raw()[1] = 2.0;
    e2.raw()[7] = -1.5;
    DualTrajectory s = e1;
    s += e2;
    const DualTrajectory bs = beta_map(s, lin.f, eps, params, lin);
    const DualTrajectory b1 = beta_map(e1, lin.f, eps, params, lin);
    const DualTrajectory b2 = beta_map(e2, lin.f, eps, params, lin);
    for (std::size_t k = 0; k < n; ++k)
        EXPECT_NEAR(bs.raw()[k], b1.raw()[k] + b2.raw()[k] - c0.raw()[k], 1e-9);
}

TEST(BetaMap, BoundIsFiniteAndReported)
{
    const ProblemSpec spec = make_spec(2.5, 3.0, 8, 8);
    const StageResult r = fixed_point_solve(spec.f, 0.1, CascadeParams{}, spec);
    ASSERT_EQ(r.report.stages.size(), 1u);
    EXPECT_TRUE(std::isfinite(r.report.stages[0].beta_bound_ratio));
    EXPECT_GT(r.report.stages[0].beta_bound_ratio, 0.0);
}

TEST(FixedPoint, ZeroData)
{
    const ProblemSpec spec = make_spec(2.5, 3.0, 8, 8, ForcingSpec::zero());
    const StageResult r = fixed_point_solve(spec.f, 0.1, CascadeParams{}, spec);
    EXPECT_TRUE(r.report.converged);
    EXPECT_EQ(max_abs(r.u.raw()), 0.0);
    EXPECT_EQ(max_abs(r.h.raw()), 0.0);
}

TEST(FixedPoint, LinearMatchesCyclicSolve)
{
    const ProblemSpec spec = make_spec(2.0, 2.0, 15, 16);
    for (double eps : {1.0, 1e-2, 1e-4}) {
        const StageResult r = fixed_point_solve(spec.f, eps, CascadeParams{}, spec);
        ASSERT_TRUE(r.report.converged);
        const PeriodicTrajectory ref = oracle::cyclic_linear_solve(spec.f, ones(16), 1.0, 1.0, 1.0, eps);
        EXPECT_LT(oracle::max_abs_diff(r.u, ref), 1e-8) << eps;
    }
}

TEST(FixedPoint, EnergyMargin)
{
    for (auto [p, m] : {std::pair{2.0, 2.0}, {2.5, 3.0}, {2.0, 3.0}}) {
        const ProblemSpec spec = make_spec(p, m, 12, 12);
        for (double eps : {0.1, 1e-3}) {
            const StageResult r = fixed_point_solve(spec.f, eps, CascadeParams{}, spec);
            ASSERT_TRUE(r.report.converged);
            const StageRecord& s = r.report.stages[0];
            EXPECT_LE(s.energy_margin, 1e-8 * s.energy_scale) << p << " " << m << " " << eps;
        }
    }
}

TEST(Continuation, ZeroData)
{
    const ProblemSpec spec = make_spec(2.5, 3.0, 8, 8, ForcingSpec::zero());
    const StageResult r = epsilon_continuation(spec.f, CascadeParams{}, spec);
    EXPECT_TRUE(r.report.converged);
    EXPECT_EQ(max_abs(r.u.raw()), 0.0);
    for (const StageRecord& s : r.report.stages)
        EXPECT_EQ(s.residual_ap, 0.0);
}

TEST(Continuation, ResidualTrendAndTarget)
{
    for (auto [p, m] : {std::pair{2.0, 3.0}, {2.5, 3.0}}) {
        const ProblemSpec spec = make_spec(p, m, 16, 16);
        const StageResult r = epsilon_continuation(spec.f, CascadeParams{}, spec);
        ASSERT_TRUE(r.report.converged) << r.report.message;
        EXPECT_EQ(r.report.route, "plain");
        const auto& st = r.report.stages;
        ASSERT_GE(st.size(), 2u);
        for (std::size_t k = 1; k < st.size(); ++k)
            EXPECT_LE(st[k].residual_ap, st[k - 1].residual_ap) << k;
        EXPECT_LE(r.report.final_residual, r.report.target);
    }
}

TEST(MuPath, RoutesWhenDiffusionExponentIsSmall)
{
    const ProblemSpec spec = make_spec(3.0, 2.0, 12, 12);
    const StageResult r = solve(spec, CascadeParams{});
    EXPECT_TRUE(r.report.converged);
    EXPECT_EQ(r.report.route, "mu_path");
    EXPECT_EQ(solve(make_spec(2.0, 3.0, 12, 12), CascadeParams{}).report.route, "plain");
}

TEST(MuPath, LinearWithFractionalExponentMatchesOracle)
{
    const ProblemSpec spec = make_spec(2.0, 2.0, 15, 16);
    CascadeParams params;
    params.alpha_exp = 1.5;
    const StageResult r = mu_path(spec.f, params, spec);
    ASSERT_TRUE(r.report.converged);
    const PeriodicTrajectory ref = oracle::cyclic_linear_solve(spec.f, ones(16), 1.0, 1.0, 1.0, 0.0);
    EXPECT_LT(oracle::rel_linf_l2(r.u, ref, spec.smesh.dx()), 1e-6);
}

TEST(MuPath, ZeroData)
{
    const ProblemSpec spec = make_spec(3.0, 2.0, 8, 8, ForcingSpec::zero());
    CascadeParams params;
    params.mu_stop_early = false;
    params.mu_schedule = {1e-1, 1e-2, 1e-3};
    const StageResult r = mu_path(spec.f, params, spec);
    EXPECT_EQ(max_abs(r.u.raw()), 0.0);
    for (const StageRecord& s : r.report.stages)
        EXPECT_EQ(s.mu_term, 0.0);
}

TEST(MuPath, TermIsLinearInMu)
{
    const ProblemSpec spec = make_spec(3.0, 2.0, 12, 12);
    CascadeParams params;
    params.mu_stop_early = false;
    params.mu_schedule = {1e-1, 1e-2, 1e-3};
    const StageResult r = mu_path(spec.f, params, spec);
    std::vector<double> mus, terms;
    // Several epsilon stages run per mu; the last one is the mu solution.
    for (const StageRecord& s : r.report.stages) {
        if (s.kind != "mu")
            continue;
        if (mus.empty() || mus.back() != s.mu) {
            mus.push_back(s.mu);
            terms.push_back(0.0);
        }
        terms.back() = s.mu_term;
    }
    ASSERT_EQ(mus.size(), 3u);
    for (std::size_t k = 0; k < 3; ++k) {
        const double c = terms[k] / mus[k];
        EXPECT_NEAR(c, terms[0] / mus[0], 0.1 * terms[0] / mus[0]);
    }
}

TEST(DirectNewton, LinearInOneStep)
{
    const ProblemSpec spec = make_spec(2.0, 2.0, 15, 16);
    const OracleResult o = direct_newton_oracle(spec.f, spec, 0.0, 1e-10);
    ASSERT_TRUE(o.converged) << o.message;
    EXPECT_EQ(o.iterations, 1);
    const PeriodicTrajectory ref = oracle::cyclic_linear_solve(spec.f, ones(16), 1.0, 1.0, 1.0, 0.0);
    EXPECT_LT(oracle::max_abs_diff(o.result->u, ref), 1e-10);
}

TEST(DirectNewton, ZeroData)
{
    const ProblemSpec spec = make_spec(2.5, 3.0, 8, 8, ForcingSpec::zero());
    const OracleResult o = direct_newton_oracle(spec.f, spec, 1e-6, 1e-10);
    EXPECT_TRUE(o.converged);
    EXPECT_EQ(o.iterations, 0);
    EXPECT_EQ(max_abs(o.result->u.raw()), 0.0);
}

TEST(DirectNewton, CrossValidatesContinuation)
{
    const ProblemSpec spec = make_spec(2.5, 3.0, 16, 16);
    CascadeParams params;
    const StageResult c = epsilon_continuation(spec.f, params, spec);
    ASSERT_TRUE(c.report.converged);
    const double tol = 1e-10;
    const OracleResult o = direct_newton_oracle(spec.f, spec, params.delta, tol);
    if (!o.converged)
        GTEST_SKIP() << "direct Newton did not converge: " << o.message;
    PeriodicTrajectory d = c.u;
    d -= o.result->u;
    EXPECT_LE(lebesgue_bochner_norm(d, 2.5, 2.5, spec.smesh, spec.tmesh),
              10.0 * (tol + c.report.target) * std::max(1.0, lebesgue_bochner_norm(c.u, 2.5, 2.5, spec.smesh, spec.tmesh)));
}

TEST(Anderson, AcceleratesLinearContraction)
{
    const int n = 20;
    Eigen::MatrixXd T(n, n);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> uni(-1, 1);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            T(i, j) = uni(rng);
    T *= 0.9 / T.operatorNorm();
    Eigen::VectorXd b = Eigen::VectorXd::Random(n);
    const Eigen::VectorXd xs = (Eigen::MatrixXd::Identity(n, n) - T).lu().solve(b);
    auto run = [&](std::size_t depth) {
        AndersonMixer mix(depth);
        std::vector<double> x(n, 0.0);
        for (int it = 0; it < 200; ++it) {
            const Eigen::Map<Eigen::VectorXd> xv(x.data(), n);
            const Eigen::VectorXd r = T * xv + b - xv;
            if (r.norm() < 1e-12)
                return it;
            x = mix.next(x, std::vector<double>(r.data(), r.data() + n), 1.0);
        }
        return 200;
    };
    const int picard = run(0), anderson = run(10);
    EXPECT_LT(anderson, picard);
    EXPECT_LT(anderson, 60);
}

TEST(Params, Validation)
{
    const ProblemSpec spec = make_spec(3.0, 2.0, 4, 4);
    CascadeParams p;
    p.epsilon_schedule = {1e-2, 1e-1};
    EXPECT_THROW(p.validate(spec), ConfigError);
    p = CascadeParams{};
    p.alpha_exp = 0.4; // must exceed p/m - 1 = 0.5
    EXPECT_THROW(p.validate(spec), ConfigError);
    p = CascadeParams{};
    p.mu_schedule = {1.5};
    EXPECT_THROW(p.validate(spec), ConfigError);
}
