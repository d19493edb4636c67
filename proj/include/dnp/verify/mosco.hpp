#pragma once

#include <chrono>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "dnp/cascade.hpp"
#include "dnp/error.hpp"
#include "dnp/forcing.hpp"
#include "dnp/parallel.hpp"
#include "dnp/problem.hpp"

namespace dnp {

enum class MoscoKind { identity, diffusion_perturbation, nonlinearity_perturbation, forcing_perturbation, combined };

inline MoscoKind parse_mosco_kind(const std::string& s)
{
    if (s == "identity") return MoscoKind::identity;
    if (s == "diffusion_perturbation") return MoscoKind::diffusion_perturbation;
    if (s == "nonlinearity_perturbation") return MoscoKind::nonlinearity_perturbation;
    if (s == "forcing_perturbation") return MoscoKind::forcing_perturbation;
    if (s == "combined") return MoscoKind::combined;
    throw ConfigError("unknown sequence kind '" + s + "'", "mosco.kind");
}

inline std::string to_string(MoscoKind k)
{
    switch (k) {
    case MoscoKind::identity: return "identity";
    case MoscoKind::diffusion_perturbation: return "diffusion_perturbation";
    case MoscoKind::nonlinearity_perturbation: return "nonlinearity_perturbation";
    case MoscoKind::forcing_perturbation: return "forcing_perturbation";
    case MoscoKind::combined: return "combined";
    }
    return "identity";
}

/// The sequence n = 1..n_max of perturbed instances:
///   a_n(x) = a(x)(1 + sin(n x)/n),  alpha_n(s) = alpha(s) + s/n,  f_n = f + g/n.
struct MoscoSequenceSpec {
    MoscoKind kind = MoscoKind::diffusion_perturbation;
    int n_max = 8;
    ProblemSpec base;
    /// Fixed direction of the forcing perturbation; defaults to
    /// sin(2 pi x/L) sin(2 pi t/T) when empty.
    std::optional<DualTrajectory> g;
};

inline DualTrajectory default_mosco_direction(const SpatialMesh& smesh, const TemporalMesh& tmesh)
{
    return sample_forcing(ForcingSpec::sinusoids({{1.0, 2, 1, -std::numbers::pi / 2.0}}), smesh, tmesh);
}

/// Instance n of the sequence. Throws ConfigError when a_n leaves the
/// positive range.
inline ProblemSpec mosco_instance(const MoscoSequenceSpec& seq, int n)
{
    if (n < 1)
        throw ConfigError("sequence index must be >= 1", "mosco.n_max");
    ProblemSpec s = seq.base;
    const double inv = 1.0 / n;
    const bool all = seq.kind == MoscoKind::combined;
    if (all || seq.kind == MoscoKind::diffusion_perturbation) {
        std::vector<double> a(s.smesh.cells());
        for (std::size_t j = 0; j < a.size(); ++j)
            a[j] = seq.base.a[j] * (1.0 + std::sin(n * s.smesh.cell_midpoint(j)) * inv);
        s.a = DiffusionField(std::move(a));
    }
    if (all || seq.kind == MoscoKind::nonlinearity_perturbation)
        s.nl = seq.base.nl.with_shift(inv);
    if (all || seq.kind == MoscoKind::forcing_perturbation) {
        const DualTrajectory g = seq.g ? *seq.g : default_mosco_direction(s.smesh, s.tmesh);
        require_shape(g, s.smesh, s.tmesh, "mosco direction");
        DualTrajectory gn = g;
        gn *= inv;
        s.f += gn;
    }
    s.validate();
    return s;
}

struct MoscoRow {
    int n = 0;
    double error = 0.0; // max_k |u_n(t_k) - u(t_k)|_{L^p}
    double residual = 0.0;
    bool converged = false;
    double seconds = 0.0;
    std::string message;
};

struct MoscoTable {
    std::string kind;
    double base_residual = 0.0;
    bool base_converged = false;
    std::vector<MoscoRow> rows;
    double noise_floor = 0.0; // 2 stage_tol
    bool monotone = false;    // strictly decreasing above the noise floor
    double final_ratio = 0.0; // e_{n_max} / e_1
    double slope = 0.0;       // least-squares slope of log e_n against log n
    bool all_converged = false;
};

/// Solves the base problem and every instance (independently, on `jobs`
/// threads) and tabulates the trajectory distances.
inline MoscoTable mosco_experiment(const MoscoSequenceSpec& seq, const CascadeParams& params, std::size_t jobs = 1)
{
    if (seq.n_max < 1)
        throw ConfigError("n_max must be >= 1", "mosco.n_max");
    std::vector<ProblemSpec> specs;
    for (int n = 1; n <= seq.n_max; ++n)
        specs.push_back(mosco_instance(seq, n));

    MoscoTable t;
    t.kind = to_string(seq.kind);
    t.noise_floor = 2.0 * params.stage_tol;
    const StageResult base = solve(seq.base, params);
    t.base_residual = base.report.final_residual;
    t.base_converged = base.report.converged;

    t.rows.resize(specs.size());
    parallel_for(specs.size(), jobs, [&](std::size_t k) {
        MoscoRow& row = t.rows[k];
        row.n = static_cast<int>(k) + 1;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            const StageResult r = solve(specs[k], params);
            row.converged = r.report.converged;
            row.residual = r.report.final_residual;
            row.message = r.report.message;
            double e = 0.0;
            for (std::size_t n = 0; n < r.u.steps(); ++n) {
                Field d(r.u.nodes());
                for (std::size_t i = 0; i < d.size(); ++i)
                    d[i] = r.u(n, i) - base.u(n, i);
                e = std::max(e, lp_norm(d, specs[k].p, specs[k].smesh));
            }
            row.error = e;
        } catch (const SolverFailure& ex) {
            row.converged = false;
            row.error = std::numeric_limits<double>::quiet_NaN();
            row.message = ex.what();
        }
        row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    });

    t.all_converged = t.base_converged;
    t.monotone = true;
    for (std::size_t k = 0; k < t.rows.size(); ++k) {
        t.all_converged = t.all_converged && t.rows[k].converged;
        if (k == 0)
            continue;
        const double a = t.rows[k - 1].error, b = t.rows[k].error;
        const bool ok = a > t.noise_floor ? b < a : b <= a + t.noise_floor;
        t.monotone = t.monotone && ok;
    }
    const double e1 = t.rows.front().error;
    t.final_ratio = e1 > 0.0 ? t.rows.back().error / e1 : 0.0;
    {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        int cnt = 0;
        for (const MoscoRow& r : t.rows) {
            if (!(r.error > 0.0))
                continue;
            const double x = std::log(static_cast<double>(r.n)), y = std::log(r.error);
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
            ++cnt;
        }
        if (cnt >= 2)
            t.slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
    }
    return t;
}

} // namespace dnp
