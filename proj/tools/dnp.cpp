// dnp: batch front end for the periodic doubly nonlinear solver.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dnp/cascade.hpp"
#include "dnp/config.hpp"
#include "dnp/forcing.hpp"
#include "dnp/parallel.hpp"
#include "dnp/report.hpp"
#include "dnp/verify/growth.hpp"
#include "dnp/verify/invariants.hpp"
#include "dnp/verify/mms.hpp"
#include "dnp/verify/mosco.hpp"

namespace fs = std::filesystem;
using namespace dnp;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_config = 1;
constexpr int exit_solver = 2;

struct Options {
    std::string config;
    std::string output;
    std::size_t jobs = 1;
    bool quiet = false;
};

struct Loaded {
    RunConfig cfg;
    fs::path out;
};

Loaded load(const Options& o)
{
    Loaded l{load_config(o.config), {}};
    l.out = o.output.empty() ? fs::path(l.cfg.output_dir) : fs::path(o.output);
    fs::create_directories(l.out);
    write_json(l.out / "config.json", to_json(l.cfg));
    return l;
}

void say(const Options& o, const std::string& s)
{
    if (!o.quiet)
        std::cout << s << '\n';
}

std::string fmt(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3e", v);
    return buf;
}

void write_solution(const fs::path& dir, const StageResult& r, const ProblemSpec& spec)
{
    write_trajectory_csv((dir / "trajectory.csv").string(), r.u, spec.smesh, spec.tmesh);
    write_trajectory_dat((dir / "trajectory.dat").string(), r.u, spec.smesh, spec.tmesh);
    std::ofstream dat(dir / "stages.dat", std::ios::binary);
    dat << "# stage epsilon mu residual_ap stage_residual energy_margin\n";
    for (std::size_t k = 0; k < r.report.stages.size(); ++k) {
        const StageRecord& s = r.report.stages[k];
        dat << k << ' ' << format_double(s.epsilon) << ' ' << format_double(s.mu) << ' '
            << format_double(s.residual_ap) << ' ' << format_double(s.stage_residual) << ' '
            << format_double(s.energy_margin) << '\n';
    }
}

/// Solve into `dir`; returns the exit code. Solver failures still leave a report.
int run_solve(const RunConfig& cfg, const fs::path& dir, nlohmann::json& report)
{
    const ProblemSpec spec = build_problem(cfg.problem);
    report["command"] = "solve";
    try {
        const StageResult r = solve(spec, cfg.cascade);
        write_solution(dir, r, spec);
        report["solve"] = to_json(r.report);
        return r.report.converged ? exit_ok : exit_solver;
    } catch (const SolverFailure& e) {
        report["error"] = e.what();
        return exit_solver;
    }
}

int cmd_solve(const Options& o)
{
    const Loaded l = load(o);
    nlohmann::json report;
    const int code = run_solve(l.cfg, l.out, report);
    write_json(l.out / "report.json", report);
    if (report.contains("solve"))
        say(o, "route " + report["solve"]["route"].get<std::string>() + ", residual " +
                   fmt(report["solve"]["final_residual"].get<double>()) + ", " +
                   (code == exit_ok ? "converged" : "not converged"));
    else
        say(o, "solver failure: " + report["error"].get<std::string>());
    return code;
}

int cmd_verify(const Options& o)
{
    const Loaded l = load(o);
    const ProblemSpec spec = build_problem(l.cfg.problem);
    nlohmann::json report;
    report["command"] = "verify";
    bool pass = true;
    try {
        const StageResult r = solve(spec, l.cfg.cascade);
        write_solution(l.out, r, spec);
        report["solve"] = to_json(r.report);
        InvariantOptions io;
        io.stage_tol = l.cfg.cascade.stage_tol;
        io.delta = l.cfg.cascade.delta;
        const InvariantReport inv = invariant_suite(r, spec, io);
        report["invariants"] = to_json(inv);
        const double clean = residual_AP(r.u, r.eta, spec);
        const PeriodicTrajectory bad = corrupt(r.u, l.cfg.verify.noise, l.cfg.seed);
        const double dirty = residual_AP(bad, eta_of(bad, spec, l.cfg.cascade.delta), spec);
        const bool control = dirty > 100.0 * clean;
        report["negative_control"] = {{"clean_residual", clean}, {"corrupted_residual", dirty},
                                      {"noise", l.cfg.verify.noise}, {"detected", control}};
        pass = r.report.converged && inv.all_passed && control;
        say(o, std::string("invariants ") + (inv.all_passed ? "pass" : "FAIL") + ", negative control " +
                   (control ? "detected" : "MISSED"));
    } catch (const SolverFailure& e) {
        report["error"] = e.what();
        pass = false;
    }
    const GrowthReport g = growth_audit(spec, l.cfg.verify.growth_samples, l.cfg.seed);
    report["growth"] = to_json(g);
    pass = pass && g.all_finite;
    report["passed"] = pass;
    write_json(l.out / "report.json", report);
    say(o, pass ? "verify: pass" : "verify: FAIL");
    return pass ? exit_ok : exit_solver;
}

int cmd_mms(const Options& o)
{
    const Loaded l = load(o);
    const ProblemSpec base = build_problem(l.cfg.problem);
    const MmsSpec mms = builtin_mms(l.cfg.mms.solution, base.smesh.length(), base.tmesh.period());
    auto levels = l.cfg.mms.levels;
    if (levels.empty())
        levels.emplace_back(base.smesh.size(), base.tmesh.size());
    nlohmann::json report;
    report["command"] = "mms";
    bool pass = true;
    try {
        const MmsTable t = mms_run(mms, base, l.cfg.cascade, levels, l.cfg.mms.mode, o.jobs);
        write_mms_tables(l.out, t);
        report["mms"] = to_json(t);
        for (const MmsLevel& lv : t.levels) {
            pass = pass && lv.converged;
            if (t.mode == "discrete")
                pass = pass && lv.error <= 10.0 * l.cfg.cascade.stage_tol;
            say(o, std::to_string(lv.M) + "x" + std::to_string(lv.N) + " error " + fmt(lv.error) +
                       (lv.converged ? "" : " (not converged)"));
        }
        for (double ord : t.orders)
            say(o, "observed order " + fmt(ord));
    } catch (const SolverFailure& e) {
        report["error"] = e.what();
        pass = false;
    }
    report["passed"] = pass;
    write_json(l.out / "report.json", report);
    return pass ? exit_ok : exit_solver;
}

int cmd_mosco(const Options& o)
{
    const Loaded l = load(o);
    MoscoSequenceSpec seq{parse_mosco_kind(l.cfg.mosco.kind), l.cfg.mosco.n_max, build_problem(l.cfg.problem),
                          std::nullopt};
    for (int n = 1; n <= seq.n_max; ++n) {
        try {
            mosco_instance(seq, n);
        } catch (const ConfigError& e) {
            throw ConfigError(std::string("instance ") + std::to_string(n) + ": " + e.what(), "mosco.kind");
        }
    }
    nlohmann::json report;
    report["command"] = "mosco";
    bool pass = false;
    try {
        const MoscoTable t = mosco_experiment(seq, l.cfg.cascade, o.jobs);
        write_mosco_tables(l.out, t);
        report["mosco"] = to_json(t);
        if (seq.kind == MoscoKind::identity)
            pass = t.all_converged && std::all_of(t.rows.begin(), t.rows.end(),
                                                  [&](const MoscoRow& r) { return r.error <= t.noise_floor; });
        else
            pass = t.all_converged && t.monotone;
        for (const MoscoRow& r : t.rows)
            say(o, "n=" + std::to_string(r.n) + " e_n " + fmt(r.error));
        if (!t.monotone)
            say(o, "e_n is not monotone; convergence along a subsequence is still consistent with the theory");
    } catch (const SolverFailure& e) {
        report["error"] = e.what();
    }
    report["passed"] = pass;
    write_json(l.out / "report.json", report);
    return pass ? exit_ok : exit_solver;
}

int cmd_sweep(const Options& o)
{
    const Loaded l = load(o);
    struct Item {
        double p, m, eps;
        fs::path dir;
        RunConfig cfg;
    };
    std::vector<Item> items;
    for (const auto& [p, m] : l.cfg.sweep.pairs)
        for (double e : l.cfg.sweep.epsilon_final) {
            RunConfig c = l.cfg;
            c.problem.p = p;
            c.problem.m = m;
            std::vector<double> eps;
            for (double v : c.cascade.epsilon_schedule)
                if (v >= e * (1.0 - 1e-12))
                    eps.push_back(v);
            if (eps.empty())
                eps.push_back(e);
            c.cascade.epsilon_schedule = eps;
            char name[96];
            std::snprintf(name, sizeof name, "p%g_m%g_eps%g", p, m, e);
            try {
                c.cascade.validate(build_problem(c.problem));
            } catch (const ConfigError& err) {
                throw ConfigError(std::string(name) + ": " + err.what(), "sweep.pairs");
            }
            items.push_back({p, m, e, l.out / name, std::move(c)});
        }
    std::vector<int> codes(items.size(), exit_solver);
    std::vector<nlohmann::json> reports(items.size());
    parallel_for(items.size(), o.jobs, [&](std::size_t k) {
        fs::create_directories(items[k].dir);
        write_json(items[k].dir / "config.json", to_json(items[k].cfg));
        codes[k] = run_solve(items[k].cfg, items[k].dir, reports[k]);
        write_json(items[k].dir / "report.json", reports[k]);
    });
    std::ofstream csv(l.out / "summary.csv", std::ios::binary);
    csv << "p,m,epsilon_final,route,converged,final_residual,directory\n";
    bool pass = true;
    for (std::size_t k = 0; k < items.size(); ++k) {
        const nlohmann::json& r = reports[k];
        const bool ok = codes[k] == exit_ok;
        pass = pass && ok;
        csv << format_double(items[k].p) << ',' << format_double(items[k].m) << ',' << format_double(items[k].eps)
            << ',' << (r.contains("solve") ? r["solve"]["route"].get<std::string>() : "failed") << ','
            << (ok ? 1 : 0) << ','
            << (r.contains("solve") ? format_double(r["solve"]["final_residual"].get<double>()) : "nan") << ','
            << items[k].dir.filename().string() << '\n';
        say(o, items[k].dir.filename().string() + (ok ? ": converged" : ": FAILED"));
    }
    return pass ? exit_ok : exit_solver;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Time-periodic doubly nonlinear parabolic solver"};
    app.require_subcommand(1);
    Options o;
    const std::vector<std::pair<std::string, std::string>> subs{
        {"solve", "solve the configured problem"},
        {"verify", "solve, then run the invariant suite and the growth audit"},
        {"mms", "manufactured-solution study"},
        {"mosco", "structural stability along a perturbed sequence"},
        {"sweep", "solve over a grid of (p, m, final epsilon)"},
    };
    for (const auto& [name, help] : subs) {
        CLI::App* s = app.add_subcommand(name, help);
        s->add_option("--config", o.config, "JSON config (schema 1)")->required()->check(CLI::ExistingFile);
        s->add_option("--jobs", o.jobs, "worker threads for independent runs")->check(CLI::PositiveNumber);
        s->add_option("--output", o.output, "output directory (overrides output_dir)");
        s->add_flag("--quiet", o.quiet, "no progress output");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_config;
    }
    const std::string cmd = app.get_subcommands().front()->get_name();
    try {
        if (cmd == "solve")
            return cmd_solve(o);
        if (cmd == "verify")
            return cmd_verify(o);
        if (cmd == "mms")
            return cmd_mms(o);
        if (cmd == "mosco")
            return cmd_mosco(o);
        return cmd_sweep(o);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return exit_config;
    } catch (const SolverFailure& e) {
        std::cerr << "solver failure: " << e.what() << '\n';
        return exit_solver;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_config;
    }
}
