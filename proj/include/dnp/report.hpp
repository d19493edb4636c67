#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "dnp/cascade.hpp"
#include "dnp/forcing.hpp"
#include "dnp/verify/growth.hpp"
#include "dnp/verify/invariants.hpp"
#include "dnp/verify/mms.hpp"
#include "dnp/verify/mosco.hpp"

namespace dnp {

namespace detail {

// JSON has no inf/nan; they are written as strings.
inline nlohmann::json num(double v)
{
    if (std::isfinite(v))
        return v;
    if (std::isnan(v))
        return "nan";
    return v > 0 ? "inf" : "-inf";
}

} // namespace detail

inline nlohmann::json to_json(const StageRecord& s)
{
    using detail::num;
    nlohmann::json hist = nlohmann::json::array();
    for (double v : s.fp_history)
        hist.push_back(num(v));
    return {
        {"kind", s.kind},
        {"epsilon", num(s.epsilon)},
        {"lambda", num(s.lambda)},
        {"mu", num(s.mu)},
        {"iterations", s.iterations},
        {"newton_iterations", s.newton_iterations},
        {"newton_steps", s.newton_steps},
        {"omega_halvings", s.omega_halvings},
        {"omega", num(s.omega)},
        {"converged", s.converged},
        {"fp_residual", num(s.fp_residual)},
        {"residual_ap", num(s.residual_ap)},
        {"stage_residual", num(s.stage_residual)},
        {"energy_margin", num(s.energy_margin)},
        {"energy_scale", num(s.energy_scale)},
        {"mu_term", num(s.mu_term)},
        {"beta_bound_ratio", num(s.beta_bound_ratio)},
        {"apriori",
         {{"derivative_bound", num(s.apriori.derivative_bound)},
          {"elliptic_bound", num(s.apriori.elliptic_bound)},
          {"sobolev_bound", num(s.apriori.sobolev_bound)},
          {"dual_bound", num(s.apriori.dual_bound)}}},
        {"fp_history", hist},
    };
}

inline nlohmann::json to_json(const SolveReport& r)
{
    using detail::num;
    nlohmann::json stages = nlohmann::json::array();
    for (const StageRecord& s : r.stages)
        stages.push_back(to_json(s));
    return {
        {"route", r.route},
        {"converged", r.converged},
        {"final_residual", num(r.final_residual)},
        {"target", num(r.target)},
        {"final_epsilon", num(r.final_epsilon)},
        {"final_mu", num(r.final_mu)},
        {"message", r.message},
        {"stages", stages},
    };
}

inline nlohmann::json to_json(const InvariantReport& r)
{
    using detail::num;
    nlohmann::json checks = nlohmann::json::array();
    for (const InvariantCheck& c : r.checks)
        checks.push_back(
            {{"name", c.name}, {"value", num(c.value)}, {"lower", num(c.lower)}, {"upper", num(c.upper)}, {"passed", c.passed}});
    return {{"all_passed", r.all_passed}, {"checks", checks}};
}

inline nlohmann::json to_json(const GrowthReport& r)
{
    using detail::num;
    nlohmann::json ineq = nlohmann::json::array();
    for (const GrowthInequality& g : r.inequalities) {
        nlohmann::json per = nlohmann::json::array();
        for (double v : g.per_decade)
            per.push_back(num(v));
        ineq.push_back({{"name", g.name}, {"statement", g.statement}, {"constant", num(g.constant)},
                        {"per_magnitude", per}, {"finite", g.finite}});
    }
    return {{"magnitudes", r.magnitudes}, {"all_finite", r.all_finite}, {"inequalities", ineq}};
}

inline nlohmann::json to_json(const MmsTable& t)
{
    using detail::num;
    nlohmann::json levels = nlohmann::json::array();
    for (const MmsLevel& l : t.levels)
        levels.push_back({{"M", l.M}, {"N", l.N}, {"dx", num(l.dx)}, {"dt", num(l.dt)}, {"error", num(l.error)},
                          {"self_difference", num(l.self_difference)}, {"residual", num(l.residual)},
                          {"converged", l.converged}, {"route", l.route}});
    nlohmann::json orders = nlohmann::json::array();
    for (double o : t.orders)
        orders.push_back(num(o));
    return {{"mode", t.mode}, {"sweep", t.sweep}, {"levels", levels}, {"orders", orders}};
}

inline nlohmann::json to_json(const MoscoTable& t)
{
    using detail::num;
    nlohmann::json rows = nlohmann::json::array();
    for (const MoscoRow& r : t.rows)
        rows.push_back({{"n", r.n}, {"error", num(r.error)}, {"residual", num(r.residual)},
                        {"converged", r.converged}, {"message", r.message}});
    return {{"kind", t.kind},           {"base_residual", num(t.base_residual)},
            {"base_converged", t.base_converged}, {"noise_floor", num(t.noise_floor)},
            {"monotone", t.monotone},   {"final_ratio", num(t.final_ratio)},
            {"slope", num(t.slope)},    {"all_converged", t.all_converged},
            {"rows", rows}};
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw InvalidInput("cannot write " + path.string());
    os << j.dump(2) << '\n';
}

inline void write_mms_tables(const std::filesystem::path& dir, const MmsTable& t)
{
    std::ofstream csv(dir / "mms.csv", std::ios::binary), dat(dir / "mms.dat", std::ios::binary);
    csv << "level,M,N,dx,dt,error,self_difference,residual\n";
    dat << "# level M N dx dt error self_difference residual\n";
    for (std::size_t k = 0; k < t.levels.size(); ++k) {
        const MmsLevel& l = t.levels[k];
        csv << k << ',' << l.M << ',' << l.N << ',' << format_double(l.dx) << ',' << format_double(l.dt) << ','
            << format_double(l.error) << ',' << format_double(l.self_difference) << ',' << format_double(l.residual)
            << '\n';
        dat << k << ' ' << l.M << ' ' << l.N << ' ' << format_double(l.dx) << ' ' << format_double(l.dt) << ' '
            << format_double(l.error) << ' ' << format_double(l.self_difference) << ' ' << format_double(l.residual)
            << '\n';
    }
}

inline void write_mosco_tables(const std::filesystem::path& dir, const MoscoTable& t)
{
    std::ofstream csv(dir / "mosco.csv", std::ios::binary), dat(dir / "mosco.dat", std::ios::binary);
    csv << "n,error,residual\n";
    dat << "# n error residual\n";
    for (const MoscoRow& r : t.rows) {
        csv << r.n << ',' << format_double(r.error) << ',' << format_double(r.residual) << '\n';
        dat << r.n << ' ' << format_double(r.error) << ' ' << format_double(r.residual) << '\n';
    }
}

} // namespace dnp
