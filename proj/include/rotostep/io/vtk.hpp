#pragma once

// Legacy ASCII VTK unstructured grids for space-time meshes and slice cross-sections.

#include "rotostep/assembly.hpp"
#include "rotostep/errors.hpp"
#include "rotostep/io/format.hpp"
#include "rotostep/mesh.hpp"

#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace rotostep::io {

/// Cross-section of a solution at slice k: the slice nodes, the reference triangles and
/// per-triangle flux density of the planar interpolant.
struct SliceDataset {
    int slice = 0;
    double time = 0.0;
    std::vector<Vec2> nodes;
    std::vector<std::array<int, 3>> triangles;
    std::vector<RegionId> region;
    std::vector<double> u;
    std::vector<Vec2> B;
};

inline SliceDataset slice_export(const SolutionField& field, int k)
{
    const auto& mesh = *field.mesh;
    const auto values = field.slice(k);
    SliceDataset s;
    s.slice = k;
    s.time = mesh.slice_time(k);
    s.triangles = mesh.reference.triangles;
    s.region = mesh.reference.region;
    s.u = values;
    for (std::size_t p = 0; p < mesh.n_planar(); ++p) {
        s.nodes.push_back(mesh.nodes[static_cast<std::size_t>(mesh.node_at(k, static_cast<int>(p)))].spatial());
    }
    for (const auto& t : s.triangles) {
        const Vec2 a = s.nodes[t[0]], b = s.nodes[t[1]], c = s.nodes[t[2]];
        const double d = cross(b - a, c - a);
        const double du1 = values[t[1]] - values[t[0]], du2 = values[t[2]] - values[t[0]];
        const Vec2 e1 = b - a, e2 = c - a;
        const Vec2 g{(du1 * e2.y - du2 * e1.y) / d, (du2 * e1.x - du1 * e2.x) / d};
        s.B.push_back({g.y, -g.x});
    }
    return s;
}

namespace detail {

inline void vtk_header(std::ostream& out, const std::string& title)
{
    out << "# vtk DataFile Version 3.0\n" << title << "\nASCII\nDATASET UNSTRUCTURED_GRID\n";
}

inline void vtk_scalars(std::ostream& out, const char* name, std::span<const double> v)
{
    out << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
    for (double x : v) out << format_number(x) << "\n";
}

inline void vtk_regions(std::ostream& out, const std::vector<RegionId>& r)
{
    out << "SCALARS region int 1\nLOOKUP_TABLE default\n";
    for (const auto& x : r) out << region_code(x) << "\n";
}

inline void vtk_vectors(std::ostream& out, const std::vector<Vec2>& b)
{
    out << "VECTORS B double\n";
    for (const auto& x : b) out << format_number(x.x) << ' ' << format_number(x.y) << " 0\n";
}

}  // namespace detail

/// Space-time mesh with optional nodal u and per-cell B. Time is written as the z coordinate.
inline void write_vtk(std::ostream& out, const SpaceTimeMesh& mesh, std::span<const double> u = {},
                      const std::vector<Vec2>* B = nullptr, const std::string& title = "rotostep space-time solution")
{
    if (!u.empty() && u.size() != mesh.nodes.size()) {
        throw Error("write_vtk: u has " + std::to_string(u.size()) + " values for " + std::to_string(mesh.nodes.size()) + " nodes");
    }
    if (B && B->size() != mesh.tets.size()) {
        throw Error("write_vtk: B has " + std::to_string(B->size()) + " values for " + std::to_string(mesh.tets.size()) + " cells");
    }
    detail::vtk_header(out, title);
    out << "POINTS " << mesh.nodes.size() << " double\n";
    for (const auto& p : mesh.nodes) out << format_number(p.x) << ' ' << format_number(p.y) << ' ' << format_number(p.t) << "\n";
    out << "CELLS " << mesh.tets.size() << ' ' << mesh.tets.size() * 5 << "\n";
    for (const auto& t : mesh.tets) out << "4 " << t[0] << ' ' << t[1] << ' ' << t[2] << ' ' << t[3] << "\n";
    out << "CELL_TYPES " << mesh.tets.size() << "\n";
    for (std::size_t i = 0; i < mesh.tets.size(); ++i) out << "10\n";
    if (!u.empty()) {
        out << "POINT_DATA " << mesh.nodes.size() << "\n";
        detail::vtk_scalars(out, "u", u);
    }
    out << "CELL_DATA " << mesh.tets.size() << "\n";
    detail::vtk_regions(out, mesh.region);
    if (B) detail::vtk_vectors(out, *B);
}

/// Triangle dataset of one slice; z = 0.
inline void write_vtk(std::ostream& out, const SliceDataset& s)
{
    if (s.u.size() != s.nodes.size()) throw Error("write_vtk: slice u does not match the nodes");
    if (s.region.size() != s.triangles.size() || (!s.B.empty() && s.B.size() != s.triangles.size())) {
        throw Error("write_vtk: slice cell arrays do not match the triangles");
    }
    detail::vtk_header(out, "rotostep slice " + std::to_string(s.slice) + " t=" + format_number(s.time));
    out << "POINTS " << s.nodes.size() << " double\n";
    for (const auto& p : s.nodes) out << format_number(p.x) << ' ' << format_number(p.y) << " 0\n";
    out << "CELLS " << s.triangles.size() << ' ' << s.triangles.size() * 4 << "\n";
    for (const auto& t : s.triangles) out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << "\n";
    out << "CELL_TYPES " << s.triangles.size() << "\n";
    for (std::size_t i = 0; i < s.triangles.size(); ++i) out << "5\n";
    out << "POINT_DATA " << s.nodes.size() << "\n";
    detail::vtk_scalars(out, "u", s.u);
    out << "CELL_DATA " << s.triangles.size() << "\n";
    detail::vtk_regions(out, s.region);
    if (!s.B.empty()) detail::vtk_vectors(out, s.B);
}

/// Structural re-read of a legacy VTK file: header lines and section counts.
struct VtkSummary {
    std::size_t points = 0;
    std::size_t cells = 0;
    int cell_type = 0;
    bool has_u = false;
    bool has_region = false;
    bool has_B = false;
};

inline VtkSummary parse_vtk_summary(std::string_view text)
{
    VtkSummary s;
    std::vector<std::string_view> lines;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        lines.push_back(text.substr(0, nl));
        text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    }
    auto fail = [](const std::string& w) { throw ParseError("vtk: " + w); };
    if (lines.size() < 4 || lines[0] != "# vtk DataFile Version 3.0" || lines[2] != "ASCII" || lines[3] != "DATASET UNSTRUCTURED_GRID") {
        fail("bad header");
    }
    auto count_after = [&](std::string_view line, std::string_view key) -> std::size_t {
        long long v = 0;
        auto rest = line.substr(key.size());
        rest = rest.substr(0, rest.find(' '));
        if (!parse_int(rest, v) || v < 0) fail("bad count in '" + std::string(line) + "'");
        return static_cast<std::size_t>(v);
    };
    for (std::size_t i = 4; i < lines.size(); ++i) {
        const auto l = lines[i];
        if (l.rfind("POINTS ", 0) == 0) {
            s.points = count_after(l, "POINTS ");
            i += s.points;
        } else if (l.rfind("CELLS ", 0) == 0) {
            s.cells = count_after(l, "CELLS ");
            i += s.cells;
        } else if (l.rfind("CELL_TYPES ", 0) == 0) {
            if (i + 1 < lines.size()) {
                long long t = 0;
                if (parse_int(lines[i + 1], t)) s.cell_type = static_cast<int>(t);
            }
            i += count_after(l, "CELL_TYPES ");
        } else if (l == "SCALARS u double 1") {
            s.has_u = true;
        } else if (l == "SCALARS region int 1") {
            s.has_region = true;
        } else if (l == "VECTORS B double") {
            s.has_B = true;
        }
    }
    if (s.points == 0 || s.cells == 0) fail("missing POINTS or CELLS");
    return s;
}

}  // namespace rotostep::io
