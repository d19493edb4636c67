#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "dnp/config.hpp"
#include "oracles.hpp"

using namespace dnp;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs = DNP_CONFIG_DIR;

fs::path scratch_dir(const std::string& name)
{
    const fs::path d = fs::temp_directory_path() / ("dnp_cli_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

int run(const std::string& args, const fs::path& log)
{
    const std::string cmd = std::string(DNP_CLI_PATH) + " " + args + " --quiet > " + (log / "stdout").string() +
                            " 2> " + (log / "stderr").string();
    const int st = std::system(cmd.c_str());
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::string slurp(const fs::path& p)
{
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

json read_json(const fs::path& p)
{
    return json::parse(slurp(p));
}

} // namespace

TEST(Cli, ZeroForcingGivesZeroTrajectory)
{
    const fs::path d = scratch_dir("zero");
    ASSERT_EQ(run("solve --config " + (kConfigs / "zero.json").string() + " --output " + (d / "o").string(), d), 0);
    const RunConfig c = load_config(kConfigs / "zero.json");
    const ProblemSpec s = build_problem(c.problem);
    const PeriodicTrajectory u = read_trajectory_csv<PrimalTag>((d / "o" / "trajectory.csv").string(), s.smesh, s.tmesh);
    for (double x : u.raw())
        EXPECT_EQ(x, 0.0);
    for (const char* f : {"report.json", "config.json", "trajectory.dat", "stages.dat"})
        EXPECT_TRUE(fs::exists(d / "o" / f)) << f;
    EXPECT_TRUE(read_json(d / "o" / "report.json")["solve"]["converged"].get<bool>());
}

TEST(Cli, MalformedConfigExitsOneAndNamesKey)
{
    const fs::path d = scratch_dir("bad");
    json j = read_json(kConfigs / "zero.json");
    j["problem"]["m"] = 0.5;
    std::ofstream(d / "bad.json") << j.dump();
    EXPECT_EQ(run("solve --config " + (d / "bad.json").string() + " --output " + (d / "o").string(), d), 1);
    EXPECT_NE(slurp(d / "stderr").find("problem.m"), std::string::npos);
    EXPECT_EQ(run("solve --output " + (d / "o").string(), d), 1);
    EXPECT_EQ(run("solve --config " + (d / "missing.json").string(), d), 1);
    EXPECT_EQ(run("frobnicate --config " + (d / "bad.json").string(), d), 1);
}

TEST(Cli, NonConvergenceExitsTwoWithReport)
{
    const fs::path d = scratch_dir("nc");
    json j = read_json(kConfigs / "nonlinear.json");
    j["problem"]["M"] = 8;
    j["problem"]["N"] = 8;
    j["cascade"] = {{"max_fp_iter", 1}};
    std::ofstream(d / "nc.json") << j.dump();
    EXPECT_EQ(run("solve --config " + (d / "nc.json").string() + " --output " + (d / "o").string(), d), 2);
    const json r = read_json(d / "o" / "report.json");
    EXPECT_FALSE(r["solve"]["converged"].get<bool>());
    EXPECT_FALSE(r["solve"]["stages"].empty());
}

TEST(Cli, BundledReferenceIsTheCyclicSolve)
{
    const RunConfig c = load_config(kConfigs / "linear.json");
    const ProblemSpec s = build_problem(c.problem);
    const PeriodicTrajectory ref =
        read_trajectory_csv<PrimalTag>((kConfigs / "linear_reference.csv").string(), s.smesh, s.tmesh);
    const PeriodicTrajectory fresh = oracle::cyclic_linear_solve(
        s.f, std::vector<double>(s.smesh.cells(), 1.0), s.smesh.length(), s.tmesh.period(), 1.0, 0.0);
    EXPECT_LT(oracle::max_abs_diff(ref, fresh), 1e-14);
}

TEST(Cli, LinearMatchesBundledReference)
{
    const fs::path d = scratch_dir("linear");
    ASSERT_EQ(run("solve --config " + (kConfigs / "linear.json").string() + " --output " + (d / "o").string(), d),
              0);
    const RunConfig c = load_config(kConfigs / "linear.json");
    const ProblemSpec s = build_problem(c.problem);
    const PeriodicTrajectory u = read_trajectory_csv<PrimalTag>((d / "o" / "trajectory.csv").string(), s.smesh, s.tmesh);
    const PeriodicTrajectory ref =
        read_trajectory_csv<PrimalTag>((kConfigs / "linear_reference.csv").string(), s.smesh, s.tmesh);
    double scale = 0.0;
    for (double x : ref.raw())
        scale = std::max(scale, std::abs(x));
    EXPECT_LE(oracle::max_abs_diff(u, ref), 1e-6 * scale);
    EXPECT_LE(oracle::rel_linf_l2(u, ref, s.smesh.dx()), 1e-6);
}

TEST(Cli, DeterministicAndEchoReproducesRun)
{
    const fs::path d = scratch_dir("det");
    const std::string cfg = (kConfigs / "nonlinear.json").string();
    ASSERT_EQ(run("solve --config " + cfg + " --output " + (d / "a").string(), d), 0);
    ASSERT_EQ(run("solve --config " + cfg + " --output " + (d / "b").string() + " --jobs 4", d), 0);
    const std::string a = slurp(d / "a" / "trajectory.csv");
    EXPECT_FALSE(a.empty());
    EXPECT_EQ(a, slurp(d / "b" / "trajectory.csv"));
    ASSERT_EQ(run("solve --config " + (d / "a" / "config.json").string() + " --output " + (d / "c").string(), d), 0);
    EXPECT_EQ(a, slurp(d / "c" / "trajectory.csv"));
}

TEST(Cli, VerifyNonlinearPasses)
{
    const fs::path d = scratch_dir("verify");
    EXPECT_EQ(run("verify --config " + (kConfigs / "nonlinear.json").string() + " --output " + (d / "o").string(), d),
              0);
    const json r = read_json(d / "o" / "report.json");
    EXPECT_TRUE(r["passed"].get<bool>());
    EXPECT_TRUE(r["invariants"]["all_passed"].get<bool>());
    EXPECT_TRUE(r["negative_control"]["detected"].get<bool>());
}

TEST(Cli, MoscoIdentityIsTrivial)
{
    const fs::path d = scratch_dir("mosco");
    EXPECT_EQ(run("mosco --config " + (kConfigs / "mosco_identity.json").string() + " --jobs 2 --output " +
                      (d / "o").string(),
                  d),
              0);
    EXPECT_TRUE(read_json(d / "o" / "report.json")["passed"].get<bool>());
}

TEST(Cli, MmsDiscretePasses)
{
    const fs::path d = scratch_dir("mms");
    EXPECT_EQ(
        run("mms --config " + (kConfigs / "mms.json").string() + " --jobs 2 --output " + (d / "o").string(), d), 0);
    EXPECT_TRUE(read_json(d / "o" / "report.json")["passed"].get<bool>());
}

TEST(Cli, SweepWritesSubdirectoriesAndSummary)
{
    const fs::path d = scratch_dir("sweep");
    ASSERT_EQ(
        run("sweep --config " + (kConfigs / "sweep.json").string() + " --jobs 4 --output " + (d / "o").string(), d),
        0);
    std::size_t dirs = 0;
    for (const auto& e : fs::directory_iterator(d / "o"))
        if (e.is_directory()) {
            ++dirs;
            EXPECT_TRUE(fs::exists(e.path() / "trajectory.csv")) << e.path();
            EXPECT_TRUE(fs::exists(e.path() / "report.json")) << e.path();
        }
    EXPECT_EQ(dirs, 5u);
    std::ifstream csv(d / "o" / "summary.csv");
    std::string line;
    std::size_t rows = 0;
    std::getline(csv, line);
    EXPECT_EQ(line.rfind("p,m,epsilon_final", 0), 0u);
    while (std::getline(csv, line))
        if (!line.empty()) {
            ++rows;
            EXPECT_NE(line.find(",1,"), std::string::npos) << line;
        }
    EXPECT_EQ(rows, 5u);
}
