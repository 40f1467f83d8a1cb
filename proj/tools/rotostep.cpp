// rotostep command line: mesh, solve, analyze, convergence, import-msh.

#include "rotostep/rotostep.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace rotostep;

namespace {

enum ExitCode { ok = 0, failure = 1, config_error = 2, mesh_error = 3, not_converged = 4 };

struct CommonOptions {
    std::string config;
    std::optional<std::string> mode;
    std::optional<std::string> problem;
    std::optional<std::string> method;
    std::optional<double> h;
    std::optional<int> slices;
    std::optional<int> workers;
    std::optional<std::string> out_dir;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool config_required)
{
    auto* c = cmd->add_option("-c,--config", o.config, "configuration file");
    if (config_required) c->required();
    cmd->add_option("--mode", o.mode, "initial, periodic or magnetostatic");
    cmd->add_option("--problem", o.problem, "linear or nonlinear");
    cmd->add_option("--method", o.method, "direct or gmres");
    cmd->add_option("--mesh-size", o.h, "planar mesh size");
    cmd->add_option("--slices", o.slices, "number of time slabs");
    cmd->add_option("--workers", o.workers, "assembly workers");
    cmd->add_option("-o,--out-dir", o.out_dir, "output directory");
}

/// Config file plus command-line overrides, applied through the config key table.
io::RunConfig load_config(const CommonOptions& o, fs::path* base_dir = nullptr)
{
    std::string text;
    if (!o.config.empty()) {
        std::ifstream in(o.config, std::ios::binary);
        if (!in) throw ConfigError("cannot open config file " + o.config);
        std::ostringstream ss;
        ss << in.rdbuf();
        text = ss.str();
        if (base_dir) *base_dir = fs::path(o.config).parent_path();
    }
    std::vector<std::string> notices;
    auto cfg = io::parse_config(text, &notices);
    std::map<std::string, std::vector<std::string>> defaulted;
    for (const auto& n : notices) {
        const auto close = n.find(']');
        const auto key_end = n.find(' ', close + 2);
        defaulted[n.substr(1, close - 1)].push_back(n.substr(close + 2, key_end - close - 2));
    }
    for (const auto& [section, keys] : defaulted) {
        std::string list;
        for (const auto& k : keys) list += (list.empty() ? "" : ", ") + k;
        spdlog::info("[{}] defaults used for: {}", section, list);
    }

    auto put = [&](const std::string& section, const std::string& key, const std::string& value) {
        for (const auto& f : io::detail::fields()) {
            if (f.section != section || f.key != key) continue;
            try {
                f.set(cfg, value);
            } catch (const std::invalid_argument& e) {
                throw ConfigError("override " + key + " = " + value + ": " + e.what());
            }
        }
    };
    if (o.mode) put("solver", "mode", *o.mode);
    if (o.problem) put("solver", "problem", *o.problem);
    if (o.method) put("solver", "method", *o.method);
    if (o.workers) put("solver", "workers", std::to_string(*o.workers));
    if (o.h) put("geometry", "h", io::format_number(*o.h));
    if (o.slices) put("geometry", "n_slices", std::to_string(*o.slices));
    if (o.out_dir) put("output", "directory", *o.out_dir);
    io::validate(cfg);
    return cfg;
}

fs::path output_path(const io::RunConfig& cfg, const std::string& suffix)
{
    const fs::path dir(cfg.output.directory);
    fs::create_directories(dir);
    return dir / (cfg.output.prefix + suffix);
}

std::ofstream open_out(const fs::path& p)
{
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error("cannot write " + p.string());
    return out;
}

SpaceTimeMesh build_mesh(const io::RunConfig& cfg, const MaterialTable& materials)
{
    const auto planar = triangulate_reference(cfg.geometry, cfg.mesh.h);
    auto mesh = extrude_twist(planar, cfg.geometry, static_cast<int>(cfg.mesh.n_slices));
    if (cfg.solver.mode == TemporalMode::Periodic) {
        mesh.periodic_pairs = pair_periodic(mesh, cfg.geometry, [&](RegionId r) { return materials.conducting(r); });
    }
    const auto q = validate(mesh);
    spdlog::info("mesh: {} planar nodes, {} slices, {} nodes, {} tets, min quality {:.3g}", mesh.n_planar(), mesh.n_slices,
                 mesh.nodes.size(), mesh.tets.size(), q.min_quality);
    if (!q.valid()) {
        throw MeshError("mesh invalid: " + std::to_string(q.inverted_count) + " inverted tets, " +
                        std::to_string(q.nonconforming_faces) + " non-conforming faces");
    }
    return mesh;
}

std::vector<int> export_slices(const io::RunConfig& cfg, int n_slices)
{
    std::vector<int> ks;
    if (cfg.output.slices.empty()) return {0, n_slices};
    for (long long k : cfg.output.slices) {
        if (k < 0 || k > n_slices) throw ConfigError("[output] slices: " + std::to_string(k) + " outside 0.." + std::to_string(n_slices));
        ks.push_back(static_cast<int>(k));
    }
    return ks;
}

int run_mesh(const CommonOptions& o)
{
    fs::path base;
    const auto cfg = load_config(o, &base);
    const auto materials = io::make_materials(cfg, base);
    const auto mesh = build_mesh(cfg, materials);
    {
        auto out = open_out(output_path(cfg, "_mesh.msh"));
        io::write_msh(out, mesh);
    }
    if (cfg.output.vtk) {
        auto out = open_out(output_path(cfg, "_mesh.vtk"));
        io::write_vtk(out, mesh);
    }
    spdlog::info("mesh written to {}", output_path(cfg, "_mesh.msh").string());
    return ok;
}

int run_solve(const CommonOptions& o)
{
    fs::path base;
    const auto cfg = load_config(o, &base);
    const bool linear = cfg.solver.problem == io::ProblemKind::Linear;
    auto materials = io::make_materials(cfg, base);
    if (linear && !materials.all_linear()) {
        spdlog::info("problem = linear: iron uses the constant reluctivity {}", nu_iron_linear);
        materials = materials.linearized();
    }
    const auto mesh = build_mesh(cfg, materials);
    const auto dofs = apply_constraints(cfg.solver.mode, mesh, materials);
    const auto load = io::make_load(cfg);
    const auto lin = io::solver_config(cfg);
    spdlog::info("{} {} problem, {} free dofs ({} constrained, {} aliased)", mode_name(cfg.solver.mode),
                 linear ? "linear" : "nonlinear", dofs.n_free, dofs.n_constrained(),
                 dofs.n_aliases());

    Assembler a(mesh, cfg.geometry, materials, dofs, lin.workers);
    LinearResult result;
    bool converged = true;
    if (linear) {
        Stopwatch clock;
        const auto sys = a.assemble(a.linear_nu_field(), load);
        spdlog::info("assembly {:.3f} s", clock.seconds());
        result = solve_linear(sys, lin);
        converged = result.report.converged();
    } else {
        const auto boot = linear_bootstrap(mesh, cfg.geometry, materials, dofs, load, lin);
        spdlog::info("bootstrap: {} iterations, residual {:.3e}", boot.report.iterations, boot.report.final_residual);
        const auto provider = make_provider(a, a.load_vector(load));
        try {
            result = newton_solve(provider, io::newton_config(cfg), boot.x);
        } catch (const DampingFloorError& e) {
            spdlog::error("{}", e.what());
            result.report = e.report;
            result.x = boot.x;
            converged = false;
        }
        if (converged) converged = result.report.converged();
    }
    spdlog::info("solve: {} after {} iterations, residual {:.3e}, {:.3f} s", status_name(result.report.status),
                 result.report.iterations, result.report.final_residual, result.report.wall_time);

    {
        auto out = open_out(output_path(cfg, "_report.csv"));
        io::write_csv(out, io::report_table(result.report, cfg.output.timings));
    }
    if (!result.x.empty()) {
        const auto u = a.field(result.x);
        if (cfg.output.vtk) {
            const auto B = flux_density(u);
            auto out = open_out(output_path(cfg, "_spacetime.vtk"));
            io::write_vtk(out, mesh, u.values, &B);
        }
        for (int k : export_slices(cfg, mesh.n_slices)) {
            auto out = open_out(output_path(cfg, "_slice_" + std::to_string(k) + ".vtk"));
            io::write_vtk(out, io::slice_export(u, k));
        }
    }
    if (!converged) {
        if (cfg.solver.budget_mode) {
            spdlog::warn("not converged; budget mode keeps the last iterate");
            return ok;
        }
        spdlog::error("solver did not converge");
        return not_converged;
    }
    return ok;
}

struct AnalyzeFlags {
    bool infsup = false;
    bool norms = false;
    bool reynolds = false;
    bool oracle = false;
};

int run_analyze(const CommonOptions& o, AnalyzeFlags f)
{
    if (!f.infsup && !f.norms && !f.reynolds && !f.oracle) f = {true, true, true, false};
    fs::path base;
    auto cfg = load_config(o, &base);
    const auto materials = io::make_materials(cfg, base);
    const auto mesh = build_mesh(cfg, materials);
    const auto load = io::make_load(cfg);
    const auto lin = io::solver_config(cfg);

    if (f.infsup) {
        const auto linear = materials.linearized();
        const auto dofs = apply_constraints(cfg.solver.mode, mesh, linear);
        Assembler a(mesh, cfg.geometry, linear, dofs, lin.workers);
        Stopwatch clock;
        const auto r = infsup_constant(a, static_cast<std::size_t>(cfg.analysis.dense_cap));
        std::printf("c_h = %.10f\nboundedness = %.10f\n", r.c_h, r.boundedness);
        std::printf("dofs = %zu  h = %.4g  method = %s  %.2f s\n", r.n_dofs, r.h, r.method.c_str(), clock.seconds());
        auto out = open_out(output_path(cfg, "_infsup.csv"));
        io::write_csv(out, io::infsup_table({{mode_name(cfg.solver.mode), r}}));
    }
    if (f.norms || f.reynolds) {
        const auto linear = materials.linearized();
        const auto dofs = apply_constraints(cfg.solver.mode, mesh, linear);
        Assembler a(mesh, cfg.geometry, linear, dofs, lin.workers);
        const auto sol = solve_linear(a.assemble(a.linear_nu_field(), load), lin);
        const auto u = a.field(sol.x);
        if (f.norms) {
            std::printf("|u|_Y = %.10g\n|u|_Xh = %.10g\n", y_norm(u, linear), discrete_x_norm(a, sol.x));
        }
        if (f.reynolds) {
            const auto r = reynolds_check(a, u);
            std::printf("u^T C u = %.10g  top = %.10g  bottom = %.10g  defect = %.4g\n", r.cuu, r.top, r.bottom, r.defect);
        }
    }
    if (f.oracle) {
        cfg.solver.mode = TemporalMode::Magnetostatic;
        const auto linear = materials.linearized();
        const auto dofs = apply_constraints(TemporalMode::Magnetostatic, mesh, linear);
        Assembler a(mesh, cfg.geometry, linear, dofs, lin.workers);
        const auto sol = solve_linear(a.assemble(a.linear_nu_field(), load), lin);
        const int k = cfg.analysis.oracle_slice < 0 ? mesh.n_slices / 2 : static_cast<int>(cfg.analysis.oracle_slice);
        std::printf("slice %d magnetostatic discrepancy = %.6g\n", k, magnetostatic_slice_oracle(a, load, a.field(sol.x), k));
    }
    return ok;
}

int run_convergence(const CommonOptions& o, const std::optional<std::string>& case_name, std::optional<int> levels)
{
    auto cfg = load_config(o);
    if (case_name) {
        if (*case_name == "static") cfg.analysis.case_kind = io::CaseKind::Static;
        else if (*case_name == "rigid") cfg.analysis.case_kind = io::CaseKind::Rigid;
        else throw ConfigError("--case: expected static or rigid");
    }
    if (levels) {
        if (*levels < 2) throw ConfigError("--levels must be at least 2");
        cfg.analysis.levels = *levels;
    }
    const auto c = ManufacturedCase::polar(cfg.analysis.case_kind == io::CaseKind::Rigid);
    auto lin = io::solver_config(cfg);
    const auto rows = convergence_study(c, static_cast<int>(cfg.analysis.levels), lin);
    for (const auto& r : rows) {
        spdlog::info("{}: h = {} slices = {} dofs = {} error = {:.6g} eoc = {:.4f} ({:.2f} s)", c.name, r.h, r.n_slices, r.n_dofs,
                     r.error, r.eoc, r.seconds);
    }
    const auto path = output_path(cfg, "_convergence_" + c.name + ".csv");
    auto out = open_out(path);
    io::write_csv(out, io::convergence_table(rows));
    spdlog::info("table written to {}", path.string());
    return ok;
}

int run_import(const std::string& file, const std::optional<std::string>& vtk_out)
{
    std::ifstream in(file, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + file);
    std::ostringstream ss;
    ss << in.rdbuf();
    const auto mesh = io::read_msh(ss.str());
    if (const auto* st = std::get_if<SpaceTimeMesh>(&mesh)) {
        const auto q = validate(*st);
        std::printf("space-time mesh: %zu nodes, %zu tets, volume %.10g, %zu boundary facets\n", st->nodes.size(), st->tets.size(),
                    st->volume(), st->facets.size());
        if (!q.valid()) throw MeshError("imported mesh is invalid");
        if (vtk_out) {
            auto out = open_out(*vtk_out);
            io::write_vtk(out, *st);
        }
    } else {
        const auto& p = std::get<PlanarMesh>(mesh);
        std::printf("planar mesh: %zu nodes, %zu triangles, area %.10g, %zu boundary edges\n", p.nodes.size(), p.triangles.size(),
                    p.area(), p.boundary_edges.size());
        if (vtk_out) {
            io::SliceDataset s;
            s.nodes = p.nodes;
            s.triangles = p.triangles;
            s.region = p.region;
            s.u.assign(p.nodes.size(), 0.0);
            auto out = open_out(*vtk_out);
            io::write_vtk(out, s);
        }
    }
    return ok;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Space-time finite elements for rotating electric machines"};
    app.require_subcommand(1);
    std::string log_level = "info";
    app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off");

    CommonOptions mesh_o, solve_o, analyze_o, conv_o;
    auto* mesh_cmd = app.add_subcommand("mesh", "generate, validate and export the space-time mesh");
    add_common(mesh_cmd, mesh_o, true);

    auto* solve_cmd = app.add_subcommand("solve", "assemble, solve and export");
    add_common(solve_cmd, solve_o, true);

    AnalyzeFlags flags;
    auto* analyze_cmd = app.add_subcommand("analyze", "inf-sup constant, norms, Reynolds defect, slice oracle");
    add_common(analyze_cmd, analyze_o, true);
    analyze_cmd->add_flag("--infsup", flags.infsup, "discrete inf-sup and boundedness constants");
    analyze_cmd->add_flag("--norms", flags.norms, "Y and discrete X norms of the linear solution");
    analyze_cmd->add_flag("--reynolds", flags.reynolds, "discrete Reynolds transport defect");
    analyze_cmd->add_flag("--oracle", flags.oracle, "magnetostatic slice oracle");

    std::optional<std::string> case_name;
    std::optional<int> levels;
    auto* conv_cmd = app.add_subcommand("convergence", "manufactured-solution convergence study");
    add_common(conv_cmd, conv_o, false);
    conv_cmd->add_option("--case", case_name, "static or rigid");
    conv_cmd->add_option("--levels", levels, "number of meshes");

    std::string msh_file;
    std::optional<std::string> vtk_out;
    auto* import_cmd = app.add_subcommand("import-msh", "read and check an MSH 2.2 mesh");
    import_cmd->add_option("file", msh_file, "MSH file")->required();
    import_cmd->add_option("--vtk", vtk_out, "write the mesh as VTK");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : config_error;
    }
    spdlog::set_pattern("[%l] %v");
    spdlog::set_level(spdlog::level::from_str(log_level));

    try {
        if (*mesh_cmd) return run_mesh(mesh_o);
        if (*solve_cmd) return run_solve(solve_o);
        if (*analyze_cmd) return run_analyze(analyze_o, flags);
        if (*conv_cmd) return run_convergence(conv_o, case_name, levels);
        if (*import_cmd) return run_import(msh_file, vtk_out);
    } catch (const ConfigError& e) {
        spdlog::error("{}", e.what());
        return config_error;
    } catch (const ParseError& e) {
        spdlog::error("{}", e.what());
        return config_error;
    } catch (const MeshError& e) {
        spdlog::error("{}", e.what());
        return mesh_error;
    } catch (const SolverError& e) {
        spdlog::error("{}", e.what());
        return not_converged;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return failure;
    }
    return failure;
}
