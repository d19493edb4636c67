#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "dnp/forcing.hpp"
#include "dnp/nonlinearity.hpp"
#include "dnp/trajectory.hpp"

using namespace dnp;

namespace {

Field random_field(std::size_t n, std::uint64_t seed, double amp = 1.0)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(-amp, amp);
    Field v(n);
    for (double& x : v)
        x = uni(rng);
    return v;
}

} // namespace

TEST(Mesh, Geometry)
{
    SpatialMesh s(2.0, 3);
    EXPECT_DOUBLE_EQ(s.dx(), 0.5);
    EXPECT_EQ(s.cells(), 4u);
    EXPECT_DOUBLE_EQ(s.node(0), 0.5);
    EXPECT_DOUBLE_EQ(s.node(2), 1.5);
    EXPECT_DOUBLE_EQ(s.cell_midpoint(3), 1.75);
    TemporalMesh t(1.0, 4);
    EXPECT_DOUBLE_EQ(t.dt(), 0.25);
    EXPECT_EQ(t.prev(0), 3u);
    EXPECT_EQ(t.next(3), 0u);
}

TEST(Mesh, RejectsBadSizes)
{
    EXPECT_THROW(SpatialMesh(1.0, 0), ConfigError);
    EXPECT_THROW(SpatialMesh(-1.0, 4), ConfigError);
    EXPECT_THROW(TemporalMesh(1.0, 0), ConfigError);
}

TEST(TimeDerivative, ConstantIsZero)
{
    SpatialMesh s(1.0, 5);
    TemporalMesh t(1.0, 8);
    PeriodicTrajectory u(8, 5);
    for (std::size_t n = 0; n < 8; ++n)
        for (std::size_t i = 0; i < 5; ++i)
            u(n, i) = 1.0 + static_cast<double>(i);
    const PeriodicTrajectory d = time_derivative(u, t);
    for (double x : d.raw())
        EXPECT_EQ(x, 0.0);
}

TEST(TimeDerivative, SineTimesField)
{
    SpatialMesh s(1.0, 4);
    TemporalMesh t(2.0, 10);
    const Field w = random_field(4, 1);
    PeriodicTrajectory u(10, 4);
    auto sn = [](std::size_t n) { return std::sin(2.0 * std::numbers::pi * static_cast<double>(n) / 10.0); };
    for (std::size_t n = 0; n < 10; ++n)
        for (std::size_t i = 0; i < 4; ++i)
            u(n, i) = sn(n) * w[i];
    const PeriodicTrajectory d = time_derivative(u, t);
    for (std::size_t n = 0; n < 10; ++n) {
        const double c = (sn(n) - sn(n == 0 ? 9 : n - 1)) / t.dt();
        for (std::size_t i = 0; i < 4; ++i)
            EXPECT_NEAR(d(n, i), c * w[i], 1e-12);
    }
}

TEST(TimeDerivative, SumsToZero)
{
    TemporalMesh t(1.0, 7);
    PeriodicTrajectory u(7, 3);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> uni(-1, 1);
    for (std::size_t k = 0; k < 21; ++k)
        u(k / 3, k % 3) = uni(rng);
    const PeriodicTrajectory d = time_derivative(u, t);
    for (std::size_t i = 0; i < 3; ++i) {
        double s = 0.0;
        for (std::size_t n = 0; n < 7; ++n)
            s += d(n, i) * t.dt();
        EXPECT_NEAR(s, 0.0, 1e-14);
    }
}

TEST(Norms, ConstantOneUsesInteriorNodes)
{
    // Node quadrature: the M interior nodes carry weight dx each, so |1|_p^p = M dx.
    SpatialMesh s(1.0, 9);
    const Field one(9, 1.0);
    for (double p : {1.5, 2.0, 3.0, 5.0})
        EXPECT_NEAR(norm_V(one, p, s), std::pow(0.9, 1.0 / p), 1e-14);
}

TEST(Norms, Holder)
{
    SpatialMesh s(1.0, 20);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Field xi = random_field(20, seed, 3.0), v = random_field(20, seed + 100);
        for (double p : {1.5, 2.0, 4.0})
            EXPECT_LE(std::abs(pairing(xi, v, s)),
                      norm_Vstar(xi, conjugate_exponent(p), s) * norm_V(v, p, s) * (1 + 1e-14));
    }
}

TEST(Norms, GradientNormConverges)
{
    // |(x(1-x))'|_2^2 = 1/3
    double prev = 1.0;
    for (std::size_t M : {15u, 31u, 63u, 127u}) {
        SpatialMesh s(1.0, M);
        Field v(M);
        for (std::size_t i = 0; i < M; ++i)
            v[i] = s.node(i) * (1.0 - s.node(i));
        const double e = std::abs(std::pow(norm_X(v, 2.0, s), 2) - 1.0 / 3.0);
        EXPECT_LT(e, prev);
        prev = e;
    }
    EXPECT_LT(prev, 1e-4);
}

TEST(Bochner, ConstantTrajectory)
{
    SpatialMesh s(1.0, 4);
    TemporalMesh t(3.0, 6);
    PeriodicTrajectory u(6, 4);
    for (double& x : u.raw())
        x = 2.0;
    const double c = lp_norm(u.slice(0), 2.0, s);
    EXPECT_NEAR(lebesgue_bochner_norm(u, 2.0, 3.0, s, t), c * std::pow(3.0, 1.0 / 3.0), 1e-13);
    EXPECT_NEAR(lebesgue_bochner_norm(u, 2.0, std::numeric_limits<double>::infinity(), s, t), c, 1e-14);
}

TEST(Bochner, SquareIsSumOfSlices)
{
    SpatialMesh s(1.0, 5);
    TemporalMesh t(1.0, 4);
    PeriodicTrajectory u(4, 5);
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> uni(-1, 1);
    for (double& x : u.raw())
        x = uni(rng);
    double ref = 0.0;
    for (std::size_t n = 0; n < 4; ++n)
        ref += t.dt() * std::pow(lp_norm(u.slice(n), 3.0, s), 2);
    EXPECT_NEAR(std::pow(lebesgue_bochner_norm(u, 3.0, 2.0, s, t), 2), ref, 1e-14);
    EXPECT_NEAR(lebesgue_bochner_norm(u, 3.0, std::numeric_limits<double>::infinity(), s, t),
                std::max({lp_norm(u.slice(0), 3, s), lp_norm(u.slice(1), 3, s), lp_norm(u.slice(2), 3, s),
                          lp_norm(u.slice(3), 3, s)}),
                1e-15);
}

TEST(Forcing, ZeroAndTimeIndependent)
{
    SpatialMesh s(1.0, 7);
    TemporalMesh t(1.0, 5);
    const DualTrajectory z = sample_forcing(ForcingSpec::zero(), s, t);
    for (double x : z.raw())
        EXPECT_EQ(x, 0.0);
    const DualTrajectory f = sample_forcing(ForcingSpec::sinusoids({{1.0, 1, 0, 0.0}}), s, t);
    for (std::size_t n = 0; n < 5; ++n)
        for (std::size_t i = 0; i < 7; ++i) {
            EXPECT_EQ(f(n, i), f(0, i));
            EXPECT_NEAR(f(n, i), std::sin(std::numbers::pi * s.node(i)), 1e-15);
        }
}

TEST(Forcing, CsvRoundTrip)
{
    SpatialMesh s(2.0, 6);
    TemporalMesh t(1.5, 5);
    DualTrajectory f(5, 6);
    std::mt19937_64 rng(4);
    std::normal_distribution<double> nd;
    for (double& x : f.raw())
        x = nd(rng) * 1e3;
    std::stringstream ss;
    write_trajectory_csv(ss, f, s, t);
    const DualTrajectory g = read_trajectory_csv(ss, s, t);
    EXPECT_EQ(f, g);
}

TEST(Forcing, CsvShapeMismatch)
{
    SpatialMesh s(1.0, 3);
    TemporalMesh t(1.0, 2);
    DualTrajectory f(2, 3);
    std::stringstream ss;
    write_trajectory_csv(ss, f, s, t);
    EXPECT_THROW(read_trajectory_csv(ss, SpatialMesh(1.0, 4), t), InvalidInput);
}

TEST(Nonlinearity, MonotoneConvexFenchel)
{
    const std::vector<Nonlinearity> all = {
        Nonlinearity::power(2.0), Nonlinearity::power(3.0), Nonlinearity::power(1.5),
        Nonlinearity::piecewise_linear({{-1.0, -2.0}, {0.0, 0.0}, {1.0, 0.5}, {2.0, 3.0}}),
        Nonlinearity::power(2.5).with_shift(0.25)};
    std::vector<double> s;
    for (int k = -40; k <= 40; ++k)
        s.push_back(0.1 * k + 0.013);
    for (const Nonlinearity& nl : all) {
        EXPECT_EQ(nl.primitive(0.0), 0.0);
        for (std::size_t k = 1; k < s.size(); ++k)
            EXPECT_LE(nl(s[k - 1]), nl(s[k]));
        for (std::size_t k = 1; k + 1 < s.size(); ++k)
            EXPECT_LE(nl.primitive(0.5 * (s[k - 1] + s[k + 1])),
                      0.5 * (nl.primitive(s[k - 1]) + nl.primitive(s[k + 1])) + 1e-12);
        for (double x : s) {
            const double lhs = nl.primitive(x) + nl.conjugate(nl(x)).value;
            EXPECT_NEAR(lhs, x * nl(x), 1e-8 * std::max(1.0, std::abs(x * nl(x))));
        }
        const GrowthConstants g = nonlinearity_growth_constants(nl, s);
        EXPECT_GT(g.lower_c, 0.0);
        EXPECT_TRUE(std::isfinite(g.upper_C));
        for (double x : s) {
            EXPECT_LE(g.lower_c * std::pow(std::abs(x), nl.p()) - 1.0 / g.lower_c, nl.primitive(x) + 1e-9);
            EXPECT_LE(std::pow(std::abs(nl(x)), conjugate_exponent(nl.p())),
                      g.upper_C * (std::pow(std::abs(x), nl.p()) + 1.0) * (1 + 1e-12));
        }
    }
}

TEST(Nonlinearity, RejectsDecreasingKnots)
{
    EXPECT_THROW(Nonlinearity::piecewise_linear({{0.0, 0.0}, {1.0, -1.0}}), ConfigError);
    EXPECT_THROW(Nonlinearity::power(1.0), ConfigError);
}
