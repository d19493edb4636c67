#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dnp/cascade.hpp"
#include "dnp/error.hpp"
#include "dnp/forcing.hpp"
#include "dnp/problem.hpp"
#include "dnp/verify/mms.hpp"
#include "dnp/verify/mosco.hpp"

namespace dnp {

using json = nlohmann::json;

struct NonlinearityConfig {
    std::string kind = "power"; // power | piecewise_linear | tabulated
    std::vector<std::pair<double, double>> knots;
    double shift = 0.0;
};

struct DiffusionConfig {
    std::string kind = "constant"; // constant | values
    double value = 1.0;
    std::vector<double> values;
};

struct ProblemConfig {
    double p = 2.0;
    double m = 2.0;
    double L = 1.0;
    double T = 1.0;
    std::size_t M = 32;
    std::size_t N = 32;
    NonlinearityConfig nonlinearity;
    DiffusionConfig diffusion;
    ForcingSpec forcing;
};

struct MmsConfig {
    std::string solution = "sine_product";
    std::string mode = "discrete";
    std::vector<std::pair<std::size_t, std::size_t>> levels;
};

struct MoscoConfig {
    std::string kind = "diffusion_perturbation";
    int n_max = 8;
};

struct SweepConfig {
    std::vector<std::pair<double, double>> pairs{{2, 2}, {2, 3}, {2.5, 3}, {3, 2}, {2, 1.5}};
    std::vector<double> epsilon_final{1e-12};
};

struct VerifyConfig {
    std::size_t growth_samples = 20;
    double noise = 1e-2;
};

struct RunConfig {
    std::uint64_t seed = 0;
    std::string output_dir = "out";
    ProblemConfig problem;
    CascadeParams cascade;
    MmsConfig mms;
    MoscoConfig mosco;
    SweepConfig sweep;
    VerifyConfig verify;
};

namespace detail {

/// Typed access to one JSON object that remembers which keys were read, so
/// unknown keys can be reported with their dotted path.
class ConfigReader {
public:
    ConfigReader(const json& obj, std::string path) : obj_(obj), path_(std::move(path))
    {
        if (!obj_.is_object())
            throw ConfigError("must be an object", path_.empty() ? "<root>" : path_);
    }

    std::string key(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }
    bool has(const std::string& k) const { return obj_.contains(k); }

    const json& at(const std::string& k)
    {
        seen_.insert(k);
        return obj_.at(k);
    }

    template <class T>
    void get(const std::string& k, T& out)
    {
        if (!has(k))
            return;
        const json& v = at(k);
        try {
            if constexpr (std::is_same_v<T, double>) {
                if (!v.is_number())
                    throw ConfigError("must be a number", key(k));
            } else if constexpr (std::is_same_v<T, bool>) {
                if (!v.is_boolean())
                    throw ConfigError("must be a boolean", key(k));
            } else if constexpr (std::is_integral_v<T>) {
                if (!v.is_number_integer())
                    throw ConfigError("must be an integer", key(k));
                if constexpr (std::is_unsigned_v<T>)
                    if (v.get<long long>() < 0)
                        throw ConfigError("must be nonnegative", key(k));
            } else if constexpr (std::is_same_v<T, std::string>) {
                if (!v.is_string())
                    throw ConfigError("must be a string", key(k));
            }
            out = v.get<T>();
        } catch (const json::exception&) {
            throw ConfigError("has the wrong type", key(k));
        }
    }

    std::vector<double> numbers(const std::string& k)
    {
        const json& v = at(k);
        if (!v.is_array())
            throw ConfigError("must be an array of numbers", key(k));
        std::vector<double> out;
        for (const json& x : v) {
            if (!x.is_number())
                throw ConfigError("must be an array of numbers", key(k));
            out.push_back(x.get<double>());
        }
        return out;
    }

    std::vector<std::pair<double, double>> pairs(const std::string& k)
    {
        const json& v = at(k);
        if (!v.is_array())
            throw ConfigError("must be an array of [a, b] pairs", key(k));
        std::vector<std::pair<double, double>> out;
        for (const json& x : v) {
            if (!x.is_array() || x.size() != 2 || !x[0].is_number() || !x[1].is_number())
                throw ConfigError("must be an array of [a, b] pairs", key(k));
            out.emplace_back(x[0].get<double>(), x[1].get<double>());
        }
        return out;
    }

    void finish() const
    {
        for (auto it = obj_.begin(); it != obj_.end(); ++it)
            if (!seen_.count(it.key()))
                throw ConfigError("unknown key", key(it.key()));
    }

private:
    const json& obj_;
    std::string path_;
    std::set<std::string> seen_;
};

/// A schedule is an explicit array or {"first", "ratio", "last"}.
inline std::vector<double> read_schedule(ConfigReader& r, const std::string& k)
{
    const json& v = r.at(k);
    if (v.is_array())
        return r.numbers(k);
    ConfigReader g(v, r.key(k));
    double first = 0, ratio = 0, last = 0;
    for (const char* f : {"first", "ratio", "last"})
        if (!g.has(f))
            throw ConfigError("missing", g.key(f));
    g.get("first", first);
    g.get("ratio", ratio);
    g.get("last", last);
    g.finish();
    try {
        return geometric_schedule(first, ratio, last);
    } catch (const ConfigError& e) {
        throw ConfigError("needs first >= last > 0 and 0 < ratio < 1", r.key(k));
    }
}

inline void read_problem(const json& j, ProblemConfig& p, const std::filesystem::path& base_dir)
{
    ConfigReader r(j, "problem");
    r.get("p", p.p);
    r.get("m", p.m);
    r.get("L", p.L);
    r.get("T", p.T);
    r.get("M", p.M);
    r.get("N", p.N);
    if (r.has("nonlinearity")) {
        ConfigReader n(r.at("nonlinearity"), "problem.nonlinearity");
        n.get("kind", p.nonlinearity.kind);
        if (p.nonlinearity.kind != "power" && p.nonlinearity.kind != "piecewise_linear" &&
            p.nonlinearity.kind != "tabulated")
            throw ConfigError("must be power, piecewise_linear or tabulated", "problem.nonlinearity.kind");
        if (n.has("knots"))
            p.nonlinearity.knots = n.pairs("knots");
        n.get("shift", p.nonlinearity.shift);
        n.finish();
    }
    if (r.has("diffusion")) {
        ConfigReader d(r.at("diffusion"), "problem.diffusion");
        d.get("kind", p.diffusion.kind);
        if (p.diffusion.kind != "constant" && p.diffusion.kind != "values")
            throw ConfigError("must be constant or values", "problem.diffusion.kind");
        d.get("value", p.diffusion.value);
        if (d.has("values"))
            p.diffusion.values = d.numbers("values");
        d.finish();
    }
    if (r.has("forcing")) {
        ConfigReader f(r.at("forcing"), "problem.forcing");
        std::string kind = "zero";
        f.get("kind", kind);
        if (kind == "zero") {
            p.forcing = ForcingSpec::zero();
        } else if (kind == "sinusoids") {
            std::vector<SinusoidTerm> terms;
            if (f.has("terms")) {
                const json& arr = f.at("terms");
                if (!arr.is_array())
                    throw ConfigError("must be an array", "problem.forcing.terms");
                for (std::size_t k = 0; k < arr.size(); ++k) {
                    ConfigReader t(arr[k], "problem.forcing.terms[" + std::to_string(k) + "]");
                    SinusoidTerm term;
                    t.get("amplitude", term.amplitude);
                    t.get("space_mode", term.space_mode);
                    t.get("time_mode", term.time_mode);
                    t.get("phase", term.phase);
                    t.finish();
                    if (term.space_mode < 1)
                        throw ConfigError("must be >= 1", t.key("space_mode"));
                    if (term.time_mode < 0)
                        throw ConfigError("must be >= 0", t.key("time_mode"));
                    terms.push_back(term);
                }
            }
            p.forcing = ForcingSpec::sinusoids(std::move(terms));
        } else if (kind == "csv") {
            std::string path;
            if (!f.has("path"))
                throw ConfigError("missing", "problem.forcing.path");
            f.get("path", path);
            std::filesystem::path fp(path);
            if (fp.is_relative())
                fp = base_dir / fp;
            p.forcing = ForcingSpec::csv(std::filesystem::absolute(fp).lexically_normal().string());
        } else {
            throw ConfigError("must be zero, sinusoids or csv", "problem.forcing.kind");
        }
        f.finish();
    }
    r.finish();
}

inline void read_cascade(const json& j, CascadeParams& c)
{
    ConfigReader r(j, "cascade");
    if (r.has("epsilon_schedule"))
        c.epsilon_schedule = read_schedule(r, "epsilon_schedule");
    if (r.has("lambda_schedule"))
        c.lambda_schedule = r.numbers("lambda_schedule");
    if (r.has("mu_schedule"))
        c.mu_schedule = read_schedule(r, "mu_schedule");
    if (r.has("alpha_exp")) {
        if (r.at("alpha_exp").is_null())
            c.alpha_exp = std::numeric_limits<double>::quiet_NaN();
        else
            r.get("alpha_exp", c.alpha_exp);
    }
    r.get("delta", c.delta);
    r.get("omega", c.omega);
    r.get("anderson_depth", c.anderson_depth);
    r.get("fp_newton", c.fp_newton);
    r.get("fp_tol", c.fp_tol);
    r.get("stage_tol", c.stage_tol);
    r.get("inner_tol", c.inner_tol);
    r.get("max_fp_iter", c.max_fp_iter);
    r.get("max_newton_iter", c.max_newton_iter);
    r.get("stagnation_ratio", c.stagnation_ratio);
    r.get("force_mu_path", c.force_mu_path);
    r.get("mu_stop_early", c.mu_stop_early);
    r.finish();
}

} // namespace detail

/// Discrete problem described by the config (reads the forcing CSV if any).
inline ProblemSpec build_problem(const ProblemConfig& pc)
{
    if (!(pc.L > 0.0) || !std::isfinite(pc.L))
        throw ConfigError("must be positive", "problem.L");
    if (!(pc.T > 0.0) || !std::isfinite(pc.T))
        throw ConfigError("must be positive", "problem.T");
    if (pc.M < 1)
        throw ConfigError("must be >= 1", "problem.M");
    if (pc.N < 2)
        throw ConfigError("must be >= 2", "problem.N");
    if (!(pc.p > 1.0) || !std::isfinite(pc.p))
        throw ConfigError("must be > 1", "problem.p");
    if (!(pc.m > 1.0) || !std::isfinite(pc.m))
        throw ConfigError("must be > 1", "problem.m");
    const SpatialMesh smesh(pc.L, pc.M);
    const TemporalMesh tmesh(pc.T, pc.N);

    Nonlinearity nl = Nonlinearity::power(2.0);
    try {
        if (pc.nonlinearity.kind == "power")
            nl = Nonlinearity::power(pc.p);
        else if (pc.nonlinearity.kind == "piecewise_linear")
            nl = Nonlinearity::piecewise_linear(pc.nonlinearity.knots);
        else
            nl = Nonlinearity::tabulated(pc.nonlinearity.knots);
        if (pc.nonlinearity.shift != 0.0)
            nl = nl.with_shift(pc.nonlinearity.shift);
    } catch (const ConfigError& e) {
        throw ConfigError(e.what(), "problem.nonlinearity");
    } catch (const InvalidInput& e) {
        throw ConfigError(e.what(), "problem.nonlinearity");
    }
    if (pc.nonlinearity.kind != "power" && pc.p != 2.0)
        throw ConfigError("piecewise-linear nonlinearities have linear growth; set p = 2", "problem.p");

    std::vector<double> a;
    if (pc.diffusion.kind == "constant") {
        a.assign(smesh.cells(), pc.diffusion.value);
    } else {
        a = pc.diffusion.values;
        if (a.size() != smesh.cells())
            throw ConfigError("needs M + 1 cell values", "problem.diffusion.values");
    }
    DiffusionField field;
    try {
        field = DiffusionField(std::move(a));
    } catch (const Error& e) {
        throw ConfigError(e.what(), "problem.diffusion");
    }

    DualTrajectory f;
    try {
        f = sample_forcing(pc.forcing, smesh, tmesh);
    } catch (const InvalidInput& e) {
        throw ConfigError(e.what(), "problem.forcing");
    }
    ProblemSpec spec{pc.p, pc.m, nl, std::move(field), std::move(f), smesh, tmesh};
    spec.validate();
    return spec;
}

/// Parses and validates a config. Relative paths resolve against `base_dir`.
inline RunConfig parse_config(const json& j, const std::filesystem::path& base_dir = ".")
{
    detail::ConfigReader r(j, "");
    if (!r.has("schema"))
        throw ConfigError("missing", "schema");
    int schema = 0;
    r.get("schema", schema);
    if (schema != 1)
        throw ConfigError("unsupported schema version " + std::to_string(schema), "schema");
    RunConfig c;
    r.get("seed", c.seed);
    r.get("output_dir", c.output_dir);
    if (r.has("problem"))
        detail::read_problem(r.at("problem"), c.problem, base_dir);
    if (r.has("cascade"))
        detail::read_cascade(r.at("cascade"), c.cascade);
    if (r.has("mms")) {
        detail::ConfigReader m(r.at("mms"), "mms");
        m.get("solution", c.mms.solution);
        m.get("mode", c.mms.mode);
        if (c.mms.mode != "discrete" && c.mms.mode != "continuum")
            throw ConfigError("must be discrete or continuum", "mms.mode");
        if (m.has("levels"))
            for (const auto& [a, b] : m.pairs("levels")) {
                if (!(a >= 1 && b >= 2) || a != std::floor(a) || b != std::floor(b))
                    throw ConfigError("levels are [M >= 1, N >= 2] integer pairs", "mms.levels");
                c.mms.levels.emplace_back(static_cast<std::size_t>(a), static_cast<std::size_t>(b));
            }
        m.finish();
        builtin_mms(c.mms.solution, 1.0, 1.0);
    }
    if (r.has("mosco")) {
        detail::ConfigReader m(r.at("mosco"), "mosco");
        m.get("kind", c.mosco.kind);
        m.get("n_max", c.mosco.n_max);
        m.finish();
        parse_mosco_kind(c.mosco.kind);
        if (c.mosco.n_max < 1)
            throw ConfigError("must be >= 1", "mosco.n_max");
    }
    if (r.has("sweep")) {
        detail::ConfigReader s(r.at("sweep"), "sweep");
        if (s.has("pairs"))
            c.sweep.pairs = s.pairs("pairs");
        if (s.has("epsilon_final"))
            c.sweep.epsilon_final = s.numbers("epsilon_final");
        s.finish();
        for (double e : c.sweep.epsilon_final)
            if (!(e > 0.0))
                throw ConfigError("values must be positive", "sweep.epsilon_final");
    }
    if (r.has("verify")) {
        detail::ConfigReader v(r.at("verify"), "verify");
        v.get("growth_samples", c.verify.growth_samples);
        v.get("noise", c.verify.noise);
        v.finish();
        if (!(c.verify.noise > 0.0))
            throw ConfigError("must be positive", "verify.noise");
    }
    r.finish();

    const ProblemSpec spec = build_problem(c.problem);
    c.cascade.validate(spec);
    return c;
}

inline RunConfig load_config(const std::filesystem::path& path)
{
    std::ifstream is(path);
    if (!is)
        throw ConfigError("cannot open " + path.string(), "--config");
    json j;
    try {
        j = json::parse(is);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("invalid JSON: ") + e.what(), "--config");
    }
    return parse_config(j, path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
}

/// Full config with every default made explicit; parse_config(to_json(c))
/// reproduces c.
inline json to_json(const RunConfig& c)
{
    json j;
    j["schema"] = 1;
    j["seed"] = c.seed;
    j["output_dir"] = c.output_dir;
    const ProblemConfig& p = c.problem;
    json pj{{"p", p.p}, {"m", p.m}, {"L", p.L}, {"T", p.T}, {"M", p.M}, {"N", p.N}};
    pj["nonlinearity"] = {{"kind", p.nonlinearity.kind}, {"shift", p.nonlinearity.shift}};
    if (p.nonlinearity.kind != "power") {
        json k = json::array();
        for (const auto& [s, a] : p.nonlinearity.knots)
            k.push_back({s, a});
        pj["nonlinearity"]["knots"] = k;
    }
    pj["diffusion"] = {{"kind", p.diffusion.kind}};
    if (p.diffusion.kind == "constant")
        pj["diffusion"]["value"] = p.diffusion.value;
    else
        pj["diffusion"]["values"] = p.diffusion.values;
    switch (p.forcing.kind) {
    case ForcingSpec::Kind::zero:
        pj["forcing"] = {{"kind", "zero"}};
        break;
    case ForcingSpec::Kind::sinusoids: {
        json terms = json::array();
        for (const SinusoidTerm& t : p.forcing.terms)
            terms.push_back({{"amplitude", t.amplitude},
                             {"space_mode", t.space_mode},
                             {"time_mode", t.time_mode},
                             {"phase", t.phase}});
        pj["forcing"] = {{"kind", "sinusoids"}, {"terms", terms}};
        break;
    }
    case ForcingSpec::Kind::csv:
        pj["forcing"] = {{"kind", "csv"}, {"path", p.forcing.csv_path}};
        break;
    case ForcingSpec::Kind::function:
        throw ConfigError("callable forcing has no config representation", "problem.forcing");
    }
    j["problem"] = pj;
    const CascadeParams& k = c.cascade;
    j["cascade"] = {
        {"epsilon_schedule", k.epsilon_schedule},
        {"lambda_schedule", k.lambda_schedule},
        {"mu_schedule", k.mu_schedule},
        {"alpha_exp", std::isnan(k.alpha_exp) ? json(nullptr) : json(k.alpha_exp)},
        {"delta", k.delta},
        {"omega", k.omega},
        {"anderson_depth", k.anderson_depth},
        {"fp_newton", k.fp_newton},
        {"fp_tol", k.fp_tol},
        {"stage_tol", k.stage_tol},
        {"inner_tol", k.inner_tol},
        {"max_fp_iter", k.max_fp_iter},
        {"max_newton_iter", k.max_newton_iter},
        {"stagnation_ratio", k.stagnation_ratio},
        {"force_mu_path", k.force_mu_path},
        {"mu_stop_early", k.mu_stop_early},
    };
    json levels = json::array();
    for (const auto& [M, N] : c.mms.levels)
        levels.push_back({M, N});
    j["mms"] = {{"solution", c.mms.solution}, {"mode", c.mms.mode}, {"levels", levels}};
    j["mosco"] = {{"kind", c.mosco.kind}, {"n_max", c.mosco.n_max}};
    json pairs = json::array();
    for (const auto& [a, b] : c.sweep.pairs)
        pairs.push_back({a, b});
    j["sweep"] = {{"pairs", pairs}, {"epsilon_final", c.sweep.epsilon_final}};
    j["verify"] = {{"growth_samples", c.verify.growth_samples}, {"noise", c.verify.noise}};
    return j;
}

} // namespace dnp
