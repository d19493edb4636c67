#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "dnp/error.hpp"
#include "dnp/mesh.hpp"
#include "dnp/trajectory.hpp"

namespace dnp {

/// A * sin(k pi x / L) * cos(2 pi j t / T + phase).
struct SinusoidTerm {
    double amplitude = 1.0;
    int space_mode = 1;
    int time_mode = 0;
    double phase = 0.0;
};

/// Forcing f(x, t): a sum of sinusoid terms (empty = zero), a CSV grid, or
/// an arbitrary callable.
struct ForcingSpec {
    enum class Kind { zero, sinusoids, csv, function };
    Kind kind = Kind::zero;
    std::vector<SinusoidTerm> terms;
    std::string csv_path;
    std::function<double(double, double)> function;

    static ForcingSpec zero() { return {}; }
    static ForcingSpec sinusoids(std::vector<SinusoidTerm> t)
    {
        ForcingSpec s;
        s.kind = Kind::sinusoids;
        s.terms = std::move(t);
        return s;
    }
    static ForcingSpec csv(std::string path)
    {
        ForcingSpec s;
        s.kind = Kind::csv;
        s.csv_path = std::move(path);
        return s;
    }
    static ForcingSpec from_function(std::function<double(double, double)> fn)
    {
        ForcingSpec s;
        s.kind = Kind::function;
        s.function = std::move(fn);
        return s;
    }
};

// ---------------------------------------------------------------------------
// CSV: header `t,x,value`, one row per (slice, node), slice-major.
// ---------------------------------------------------------------------------

inline std::string format_double(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <class Tag>
void write_trajectory_csv(std::ostream& os, const Trajectory<Tag>& u, const SpatialMesh& smesh,
                          const TemporalMesh& tmesh)
{
    os << "t,x,value\n";
    for (std::size_t n = 0; n < u.steps(); ++n)
        for (std::size_t i = 0; i < u.nodes(); ++i)
            os << format_double(tmesh.time(n)) << ',' << format_double(smesh.node(i)) << ','
               << format_double(u(n, i)) << '\n';
}

template <class Tag>
void write_trajectory_csv(const std::string& path, const Trajectory<Tag>& u, const SpatialMesh& smesh,
                          const TemporalMesh& tmesh)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw InvalidInput("cannot open " + path + " for writing");
    write_trajectory_csv(os, u, smesh, tmesh);
}

/// Gnuplot block format: one blank-line separated block per time slice.
template <class Tag>
void write_trajectory_dat(const std::string& path, const Trajectory<Tag>& u, const SpatialMesh& smesh,
                          const TemporalMesh& tmesh)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw InvalidInput("cannot open " + path + " for writing");
    os << "# t x value\n";
    for (std::size_t n = 0; n < u.steps(); ++n) {
        for (std::size_t i = 0; i < u.nodes(); ++i)
            os << format_double(tmesh.time(n)) << ' ' << format_double(smesh.node(i)) << ' '
               << format_double(u(n, i)) << '\n';
        os << '\n';
    }
}

/// Reads a `t,x,value` grid. Rows may come in any order; the distinct t and
/// x values must number exactly N and M.
template <class Tag = DualTag>
Trajectory<Tag> read_trajectory_csv(std::istream& is, const SpatialMesh& smesh, const TemporalMesh& tmesh)
{
    std::string line;
    if (!std::getline(is, line))
        throw InvalidInput("empty CSV");
    if (!line.empty() && line.back() == '\r')
        line.pop_back();
    if (line != "t,x,value")
        throw InvalidInput("CSV header must be t,x,value");
    std::map<double, std::map<double, double>> grid;
    std::size_t rows = 0;
    while (std::getline(is, line)) {
        if (line.empty() || line == "\r")
            continue;
        std::istringstream ls(line);
        std::string a, b, c;
        if (!std::getline(ls, a, ',') || !std::getline(ls, b, ',') || !std::getline(ls, c))
            throw InvalidInput("malformed CSV row: " + line);
        try {
            grid[std::stod(a)][std::stod(b)] = std::stod(c);
        } catch (const std::exception&) {
            throw InvalidInput("malformed CSV row: " + line);
        }
        ++rows;
    }
    if (grid.size() != tmesh.size())
        throw InvalidInput("CSV has " + std::to_string(grid.size()) + " time slices, expected " +
                           std::to_string(tmesh.size()));
    Trajectory<Tag> out(tmesh.size(), smesh.size());
    std::size_t n = 0;
    for (const auto& [t, row] : grid) {
        if (row.size() != smesh.size())
            throw InvalidInput("CSV slice has " + std::to_string(row.size()) + " nodes, expected " +
                               std::to_string(smesh.size()));
        std::size_t i = 0;
        for (const auto& [x, v] : row)
            out(n, i++) = v;
        ++n;
    }
    if (rows != tmesh.size() * smesh.size())
        throw InvalidInput("CSV has duplicate rows");
    require_finite(out.raw(), "CSV values");
    return out;
}

template <class Tag = DualTag>
Trajectory<Tag> read_trajectory_csv(const std::string& path, const SpatialMesh& smesh, const TemporalMesh& tmesh)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw InvalidInput("cannot open " + path);
    return read_trajectory_csv<Tag>(is, smesh, tmesh);
}

/// f(x_i, t_n) on the grid.
inline DualTrajectory sample_forcing(const ForcingSpec& spec, const SpatialMesh& smesh, const TemporalMesh& tmesh)
{
    DualTrajectory f(tmesh.size(), smesh.size());
    switch (spec.kind) {
    case ForcingSpec::Kind::zero:
        break;
    case ForcingSpec::Kind::sinusoids: {
        const double L = smesh.length(), T = tmesh.period();
        for (std::size_t n = 0; n < tmesh.size(); ++n)
            for (std::size_t i = 0; i < smesh.size(); ++i) {
                double s = 0.0;
                for (const SinusoidTerm& term : spec.terms)
                    s += term.amplitude * std::sin(term.space_mode * std::numbers::pi * smesh.node(i) / L) *
                         std::cos(2.0 * std::numbers::pi * term.time_mode * tmesh.time(n) / T + term.phase);
                f(n, i) = s;
            }
        break;
    }
    case ForcingSpec::Kind::csv:
        f = read_trajectory_csv<DualTag>(spec.csv_path, smesh, tmesh);
        break;
    case ForcingSpec::Kind::function:
        for (std::size_t n = 0; n < tmesh.size(); ++n)
            for (std::size_t i = 0; i < smesh.size(); ++i)
                f(n, i) = spec.function(smesh.node(i), tmesh.time(n));
        break;
    }
    require_finite(f.raw(), "forcing");
    return f;
}

} // namespace dnp
