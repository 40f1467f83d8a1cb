#pragma once

// Run configuration: `[section]` headers, `key = value` lines and `#` comments. Parsing is
// strict (unknown sections or keys, duplicates and malformed values are errors naming the
// line); absent keys keep their defaults and are reported as notices.

#include "rotostep/assembly.hpp"
#include "rotostep/errors.hpp"
#include "rotostep/geometry.hpp"
#include "rotostep/io/format.hpp"
#include "rotostep/materials.hpp"
#include "rotostep/solver.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace rotostep::io {

enum class IronModel { Brauer, Linear, Spline };
enum class ProblemKind { Linear, Nonlinear };
enum class CaseKind { Static, Rigid };

struct MaterialsConfig {
    IronModel iron = IronModel::Brauer;
    double brauer_k1 = BrauerReluctivity{}.k1;
    double brauer_k2 = BrauerReluctivity{}.k2;
    double brauer_k3 = BrauerReluctivity{}.k3;
    double iron_nu = nu_iron_linear;
    std::string bh_csv;
    double sigma_magnet = 1e6;
    double nu_magnet = nu_magnet_default;
    double nu_air = nu_vacuum;

    friend bool operator==(const MaterialsConfig&, const MaterialsConfig&) = default;
};

struct SourceConfig {
    double amplitude = 1555.0;
    double coil_area = 0.0;  ///< 0 selects the nominal sector area
    double frequency = 0.0;  ///< 0 selects (n_magnets / 2) x revolutions per second
    double remanence = 1.216;
    bool currents = true;
    bool magnets = true;

    friend bool operator==(const SourceConfig&, const SourceConfig&) = default;
};

struct SolverSection {
    TemporalMode mode = TemporalMode::Initial;
    ProblemKind problem = ProblemKind::Linear;
    LinearMethod method = LinearMethod::Direct;
    PreconditionerKind preconditioner = PreconditionerKind::Ilu0;
    long long restart = 50;
    long long max_iterations = 250;
    double rtol = 1e-8;
    bool budget_mode = false;
    long long max_newton = 100;
    double newton_rel_tol = 1e-8;
    double newton_abs_tol = 0.0;
    double min_step = 1.0 / 1024.0;
    long long workers = 0;  ///< 0 selects the default worker count

    friend bool operator==(const SolverSection&, const SolverSection&) = default;
};

struct AnalysisConfig {
    long long dense_cap = 5000;
    long long levels = 3;
    CaseKind case_kind = CaseKind::Static;
    long long oracle_slice = -1;  ///< -1 selects the middle slice

    friend bool operator==(const AnalysisConfig&, const AnalysisConfig&) = default;
};

struct OutputConfig {
    std::string directory = ".";
    std::string prefix = "rotostep";
    bool vtk = true;  ///< mesh and space-time VTK; the selected slices are always written
    bool timings = true;  ///< false writes 0 in the time column of solver reports
    std::vector<long long> slices;  ///< empty selects the first and last slice

    friend bool operator==(const OutputConfig&, const OutputConfig&) = default;
};

struct MeshConfig {
    double h = 0.005;
    long long n_slices = 30;

    friend bool operator==(const MeshConfig&, const MeshConfig&) = default;
};

struct RunConfig {
    MotorGeometry geometry = MotorGeometry::desk_motor();
    MeshConfig mesh;
    MaterialsConfig materials;
    SourceConfig source;
    SolverSection solver;
    AnalysisConfig analysis;
    OutputConfig output;
};

namespace detail {

struct FieldSpec {
    std::string section;
    std::string key;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, std::string_view)> set;  ///< throws std::invalid_argument with a reason
};

template <class E>
struct EnumName {
    E value;
    const char* name;
};

template <class Ref>
FieldSpec real(const char* s, const char* k, Ref ref)
{
    return {s, k, [ref](const RunConfig& c) { return format_number(ref(const_cast<RunConfig&>(c))); },
            [ref](RunConfig& c, std::string_view v) {
                double x = 0.0;
                if (!parse_double(v, x) || !std::isfinite(x)) throw std::invalid_argument("expected a decimal number");
                ref(c) = x;
            }};
}

template <class Ref>
FieldSpec integer(const char* s, const char* k, Ref ref)
{
    return {s, k, [ref](const RunConfig& c) { return std::to_string(ref(const_cast<RunConfig&>(c))); },
            [ref](RunConfig& c, std::string_view v) {
                long long x = 0;
                if (!parse_int(v, x)) throw std::invalid_argument("expected an integer");
                ref(c) = static_cast<std::remove_reference_t<decltype(ref(c))>>(x);
            }};
}

template <class Ref>
FieldSpec boolean(const char* s, const char* k, Ref ref)
{
    return {s, k, [ref](const RunConfig& c) { return std::string(ref(const_cast<RunConfig&>(c)) ? "true" : "false"); },
            [ref](RunConfig& c, std::string_view v) {
                if (v == "true") ref(c) = true;
                else if (v == "false") ref(c) = false;
                else throw std::invalid_argument("expected true or false");
            }};
}

template <class Ref>
FieldSpec text(const char* s, const char* k, Ref ref)
{
    return {s, k, [ref](const RunConfig& c) { return ref(const_cast<RunConfig&>(c)); },
            [ref](RunConfig& c, std::string_view v) { ref(c) = std::string(v); }};
}

template <class E, std::size_t N, class Ref>
FieldSpec choice(const char* s, const char* k, const std::array<EnumName<E>, N>& names, Ref ref)
{
    return {s, k,
            [names, ref](const RunConfig& c) {
                for (const auto& n : names) {
                    if (n.value == ref(const_cast<RunConfig&>(c))) return std::string(n.name);
                }
                return std::string("?");
            },
            [names, ref](RunConfig& c, std::string_view v) {
                std::string allowed;
                for (const auto& n : names) {
                    if (v == n.name) {
                        ref(c) = n.value;
                        return;
                    }
                    allowed += (allowed.empty() ? "" : ", ") + std::string(n.name);
                }
                throw std::invalid_argument("expected one of: " + allowed);
            }};
}

template <class Ref>
FieldSpec int_list(const char* s, const char* k, Ref ref)
{
    return {s, k,
            [ref](const RunConfig& c) {
                std::string out;
                for (long long x : ref(const_cast<RunConfig&>(c))) out += (out.empty() ? "" : ",") + std::to_string(x);
                return out;
            },
            [ref](RunConfig& c, std::string_view v) {
                std::vector<long long> out;
                while (!v.empty()) {
                    const auto comma = v.find(',');
                    const auto item = trim(v.substr(0, comma));
                    long long x = 0;
                    if (!parse_int(item, x)) throw std::invalid_argument("expected a comma-separated list of integers");
                    out.push_back(x);
                    if (comma == std::string_view::npos) break;
                    v.remove_prefix(comma + 1);
                }
                ref(c) = std::move(out);
            }};
}

#define ROTOSTEP_REF(expr) [](RunConfig& c) -> auto& { return c.expr; }

inline const std::vector<FieldSpec>& fields()
{
    static const std::vector<FieldSpec> table = [] {
        std::vector<FieldSpec> f;
        const char* g = "geometry";
        f.push_back(real(g, "r0", ROTOSTEP_REF(geometry.r0)));
        f.push_back(real(g, "r1", ROTOSTEP_REF(geometry.r1)));
        f.push_back(real(g, "r2", ROTOSTEP_REF(geometry.r2)));
        f.push_back(real(g, "R", ROTOSTEP_REF(geometry.R)));
        f.push_back(real(g, "alpha", ROTOSTEP_REF(geometry.alpha)));
        f.push_back(real(g, "T_final", ROTOSTEP_REF(geometry.T_final)));
        f.push_back(integer(g, "n_magnets", ROTOSTEP_REF(geometry.n_magnets)));
        f.push_back(integer(g, "n_coils", ROTOSTEP_REF(geometry.n_coils)));
        f.push_back(real(g, "magnet_arc", ROTOSTEP_REF(geometry.magnet_arc)));
        f.push_back(real(g, "pocket_arc", ROTOSTEP_REF(geometry.pocket_arc)));
        f.push_back(real(g, "coil_arc", ROTOSTEP_REF(geometry.coil_arc)));
        f.push_back(real(g, "magnet_r_in", ROTOSTEP_REF(geometry.magnet_r_in)));
        f.push_back(real(g, "magnet_r_out", ROTOSTEP_REF(geometry.magnet_r_out)));
        f.push_back(real(g, "coil_r_in", ROTOSTEP_REF(geometry.coil_r_in)));
        f.push_back(real(g, "coil_r_out", ROTOSTEP_REF(geometry.coil_r_out)));
        f.push_back(choice(g, "blend", std::array<EnumName<BlendMode>, 2>{{{BlendMode::Standard, "standard"}, {BlendMode::Rigid, "rigid"}}},
                           ROTOSTEP_REF(geometry.blend)));
        f.push_back(real(g, "h", ROTOSTEP_REF(mesh.h)));
        f.push_back(integer(g, "n_slices", ROTOSTEP_REF(mesh.n_slices)));

        const char* m = "materials";
        f.push_back(choice(m, "iron",
                           std::array<EnumName<IronModel>, 3>{{{IronModel::Brauer, "brauer"}, {IronModel::Linear, "linear"}, {IronModel::Spline, "spline"}}},
                           ROTOSTEP_REF(materials.iron)));
        f.push_back(real(m, "brauer_k1", ROTOSTEP_REF(materials.brauer_k1)));
        f.push_back(real(m, "brauer_k2", ROTOSTEP_REF(materials.brauer_k2)));
        f.push_back(real(m, "brauer_k3", ROTOSTEP_REF(materials.brauer_k3)));
        f.push_back(real(m, "iron_nu", ROTOSTEP_REF(materials.iron_nu)));
        f.push_back(text(m, "bh_csv", ROTOSTEP_REF(materials.bh_csv)));
        f.push_back(real(m, "sigma_magnet", ROTOSTEP_REF(materials.sigma_magnet)));
        f.push_back(real(m, "nu_magnet", ROTOSTEP_REF(materials.nu_magnet)));
        f.push_back(real(m, "nu_air", ROTOSTEP_REF(materials.nu_air)));

        const char* s = "source";
        f.push_back(real(s, "amplitude", ROTOSTEP_REF(source.amplitude)));
        f.push_back(real(s, "coil_area", ROTOSTEP_REF(source.coil_area)));
        f.push_back(real(s, "frequency", ROTOSTEP_REF(source.frequency)));
        f.push_back(real(s, "remanence", ROTOSTEP_REF(source.remanence)));
        f.push_back(boolean(s, "currents", ROTOSTEP_REF(source.currents)));
        f.push_back(boolean(s, "magnets", ROTOSTEP_REF(source.magnets)));

        const char* v = "solver";
        f.push_back(choice(v, "mode",
                           std::array<EnumName<TemporalMode>, 3>{{{TemporalMode::Initial, "initial"},
                                                                  {TemporalMode::Periodic, "periodic"},
                                                                  {TemporalMode::Magnetostatic, "magnetostatic"}}},
                           ROTOSTEP_REF(solver.mode)));
        f.push_back(choice(v, "problem",
                           std::array<EnumName<ProblemKind>, 2>{{{ProblemKind::Linear, "linear"}, {ProblemKind::Nonlinear, "nonlinear"}}},
                           ROTOSTEP_REF(solver.problem)));
        f.push_back(choice(v, "method",
                           std::array<EnumName<LinearMethod>, 2>{{{LinearMethod::Direct, "direct"}, {LinearMethod::Gmres, "gmres"}}},
                           ROTOSTEP_REF(solver.method)));
        f.push_back(choice(v, "preconditioner",
                           std::array<EnumName<PreconditionerKind>, 3>{{{PreconditionerKind::None, "none"},
                                                                        {PreconditionerKind::Jacobi, "jacobi"},
                                                                        {PreconditionerKind::Ilu0, "ilu0"}}},
                           ROTOSTEP_REF(solver.preconditioner)));
        f.push_back(integer(v, "restart", ROTOSTEP_REF(solver.restart)));
        f.push_back(integer(v, "max_iterations", ROTOSTEP_REF(solver.max_iterations)));
        f.push_back(real(v, "rtol", ROTOSTEP_REF(solver.rtol)));
        f.push_back(boolean(v, "budget_mode", ROTOSTEP_REF(solver.budget_mode)));
        f.push_back(integer(v, "max_newton", ROTOSTEP_REF(solver.max_newton)));
        f.push_back(real(v, "newton_rel_tol", ROTOSTEP_REF(solver.newton_rel_tol)));
        f.push_back(real(v, "newton_abs_tol", ROTOSTEP_REF(solver.newton_abs_tol)));
        f.push_back(real(v, "min_step", ROTOSTEP_REF(solver.min_step)));
        f.push_back(integer(v, "workers", ROTOSTEP_REF(solver.workers)));

        const char* a = "analysis";
        f.push_back(integer(a, "dense_cap", ROTOSTEP_REF(analysis.dense_cap)));
        f.push_back(integer(a, "levels", ROTOSTEP_REF(analysis.levels)));
        f.push_back(choice(a, "case", std::array<EnumName<CaseKind>, 2>{{{CaseKind::Static, "static"}, {CaseKind::Rigid, "rigid"}}},
                           ROTOSTEP_REF(analysis.case_kind)));
        f.push_back(integer(a, "oracle_slice", ROTOSTEP_REF(analysis.oracle_slice)));

        const char* o = "output";
        f.push_back(text(o, "directory", ROTOSTEP_REF(output.directory)));
        f.push_back(text(o, "prefix", ROTOSTEP_REF(output.prefix)));
        f.push_back(boolean(o, "vtk", ROTOSTEP_REF(output.vtk)));
        f.push_back(boolean(o, "timings", ROTOSTEP_REF(output.timings)));
        f.push_back(int_list(o, "slices", ROTOSTEP_REF(output.slices)));
        return f;
    }();
    return table;
}

#undef ROTOSTEP_REF

inline const std::vector<std::string>& section_names()
{
    static const std::vector<std::string> names{"geometry", "materials", "source", "solver", "analysis", "output"};
    return names;
}

}  // namespace detail

inline bool operator==(const RunConfig& a, const RunConfig& b)
{
    for (const auto& f : detail::fields()) {
        if (f.get(a) != f.get(b)) return false;
    }
    return true;
}

/// Parse configuration text. Keys left at their default are appended to `notices`.
inline RunConfig parse_config(std::string_view text, std::vector<std::string>* notices = nullptr)
{
    RunConfig cfg;
    const auto& specs = detail::fields();
    std::map<std::pair<std::string, std::string>, const detail::FieldSpec*> index;
    for (const auto& f : specs) index[{f.section, f.key}] = &f;
    const auto& sections = detail::section_names();

    std::map<std::pair<std::string, std::string>, int> seen;
    std::set<std::string> seen_sections;
    std::string section;
    int lineno = 0;
    auto fail = [&](const std::string& what) { throw ConfigError("config line " + std::to_string(lineno) + ": " + what); };
    while (!text.empty()) {
        ++lineno;
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') fail("malformed section header");
            section = std::string(trim(line.substr(1, line.size() - 2)));
            if (std::find(sections.begin(), sections.end(), section) == sections.end()) fail("unknown section [" + section + "]");
            if (!seen_sections.insert(section).second) fail("duplicate section [" + section + "]");
            continue;
        }
        if (section.empty()) fail("key outside of any section");
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) fail("expected key = value");
        const std::string key(trim(line.substr(0, eq)));
        const std::string_view value = trim(line.substr(eq + 1));
        if (key.empty()) fail("empty key");
        const auto it = index.find({section, key});
        if (it == index.end()) fail("unknown key '" + key + "' in [" + section + "]");
        const auto [prev, fresh] = seen.emplace(std::pair{section, key}, lineno);
        if (!fresh) fail("duplicate key '" + key + "' in [" + section + "] (first set on line " + std::to_string(prev->second) + ")");
        try {
            it->second->set(cfg, value);
        } catch (const std::invalid_argument& e) {
            fail("bad value for '" + key + "': " + e.what());
        }
    }
    if (notices) {
        for (const auto& f : specs) {
            if (!seen.count({f.section, f.key})) {
                notices->push_back("[" + f.section + "] " + f.key + " not set, using default " + f.get(cfg));
            }
        }
    }
    return cfg;
}

/// Canonical text: every section and key in a fixed order.
inline std::string write_config(const RunConfig& cfg)
{
    std::string out;
    std::string section;
    for (const auto& f : detail::fields()) {
        if (f.section != section) {
            if (!section.empty()) out += "\n";
            section = f.section;
            out += "[" + section + "]\n";
        }
        out += f.key + " = " + f.get(cfg) + "\n";
    }
    return out;
}

inline RunConfig read_config_file(const std::filesystem::path& path, std::vector<std::string>* notices = nullptr)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), notices);
}

inline SolverConfig solver_config(const RunConfig& cfg);

/// Checks that span sections: geometry invariants, mesh and solver limits.
inline void validate(const RunConfig& cfg)
{
    cfg.geometry.validate();
    if (!(cfg.mesh.h > 0.0)) throw ConfigError("geometry: h must be positive");
    if (cfg.mesh.n_slices < 1) throw ConfigError("geometry: n_slices must be at least 1");
    if (cfg.solver.workers < 0) throw ConfigError("solver: workers must be non-negative");
    if (cfg.analysis.levels < 2) throw ConfigError("analysis: levels must be at least 2");
    if (cfg.analysis.dense_cap < 1) throw ConfigError("analysis: dense_cap must be positive");
    if (cfg.materials.iron == IronModel::Spline && cfg.materials.bh_csv.empty()) {
        throw ConfigError("materials: iron = spline needs bh_csv");
    }
    if (cfg.solver.mode == TemporalMode::Periodic && !cfg.geometry.rotation_is_periodic()) {
        throw ConfigError("periodic mode needs alpha * T_final to be a multiple of the magnet pitch");
    }
    if (!(cfg.materials.sigma_magnet >= 0.0)) throw ConfigError("materials: sigma_magnet must be non-negative");
    for (double nu_v : {cfg.materials.iron_nu, cfg.materials.nu_magnet, cfg.materials.nu_air}) {
        if (!(nu_v > 0.0)) throw ConfigError("materials: reluctivities must be positive");
    }
    solver_config(cfg).validate();
}

inline SolverConfig solver_config(const RunConfig& cfg)
{
    SolverConfig s;
    s.method = cfg.solver.method;
    s.preconditioner = cfg.solver.preconditioner;
    s.restart = static_cast<int>(cfg.solver.restart);
    s.max_iterations = static_cast<int>(cfg.solver.max_iterations);
    s.rtol = cfg.solver.rtol;
    s.budget_mode = cfg.solver.budget_mode;
    if (cfg.solver.workers > 0) s.workers = static_cast<int>(cfg.solver.workers);
    return s;
}

inline NewtonConfig newton_config(const RunConfig& cfg)
{
    NewtonConfig n;
    n.max_newton = static_cast<int>(cfg.solver.max_newton);
    n.rel_tol = cfg.solver.newton_rel_tol;
    n.abs_tol = cfg.solver.newton_abs_tol;
    n.min_step = cfg.solver.min_step;
    n.linear = solver_config(cfg);
    return n;
}

/// Material table from the [materials] section; bh_csv is resolved against base_dir.
inline MaterialTable make_materials(const RunConfig& cfg, const std::filesystem::path& base_dir = {})
{
    const auto& m = cfg.materials;
    ReluctivityModel iron = ConstantReluctivity{m.iron_nu};
    if (m.iron == IronModel::Brauer) {
        iron = BrauerReluctivity{m.brauer_k1, m.brauer_k2, m.brauer_k3};
    } else if (m.iron == IronModel::Spline) {
        std::filesystem::path p(m.bh_csv);
        if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
        std::ifstream in(p);
        if (!in) throw ConfigError("cannot open BH curve " + p.string());
        iron = read_bh_csv(in);
    }
    MaterialTable t = MaterialTable::motor_default(iron);
    t.set(RegionKind::Magnet, {m.sigma_magnet, ConstantReluctivity{m.nu_magnet}});
    for (auto k : {RegionKind::AirGap, RegionKind::RotorAirPocket, RegionKind::Coil}) t.set(k, {0.0, ConstantReluctivity{m.nu_air}});
    return t;
}

inline SourceModel make_source(const RunConfig& cfg)
{
    SourceModel s = SourceModel::for_geometry(cfg.geometry);
    s.amplitude = cfg.source.amplitude;
    s.remanence = cfg.source.remanence;
    if (cfg.source.coil_area > 0.0) s.coil_area = cfg.source.coil_area;
    if (cfg.source.frequency > 0.0) s.frequency = cfg.source.frequency;
    return s;
}

inline LoadTerms make_load(const RunConfig& cfg)
{
    LoadTerms l = LoadTerms::motor(make_source(cfg), cfg.geometry);
    if (!cfg.source.currents) l.current = nullptr;
    if (!cfg.source.magnets) l.magnetization_perp = nullptr;
    return l;
}

}  // namespace rotostep::io
