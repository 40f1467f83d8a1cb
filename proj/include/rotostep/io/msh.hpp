#pragma once

// Gmsh MSH 2.2 ASCII subset: $MeshFormat, $Nodes and $Elements with triangles (type 2)
// and tetrahedra (type 4). The first element tag is the physical region.

#include "rotostep/errors.hpp"
#include "rotostep/geometry.hpp"
#include "rotostep/io/format.hpp"
#include "rotostep/mesh.hpp"

#include <functional>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

namespace rotostep::io {

/// Inverse of region_code; throws ParseError for codes outside the scheme.
inline RegionId region_from_code(int code)
{
    switch (code) {
    case 0: return {RegionKind::RotorIron, 0};
    case 1: return {RegionKind::RotorAirPocket, 0};
    case 2: return {RegionKind::AirGap, 0};
    case 3: return {RegionKind::StatorIron, 0};
    default: break;
    }
    if (code >= 100 && code < 200) return {RegionKind::Magnet, code - 100};
    if (code >= 200 && code < 300) return {RegionKind::Coil, code - 200};
    throw ParseError("no region for physical tag " + std::to_string(code));
}

using RegionTable = std::function<RegionId(int)>;
using MshMesh = std::variant<PlanarMesh, SpaceTimeMesh>;

namespace detail {

class LineReader {
public:
    explicit LineReader(std::string_view text) : text_(text) {}

    bool next(std::string_view& line)
    {
        while (!text_.empty()) {
            const auto nl = text_.find('\n');
            line = trim(text_.substr(0, nl));
            text_.remove_prefix(nl == std::string_view::npos ? text_.size() : nl + 1);
            ++lineno_;
            if (!line.empty()) return true;
        }
        return false;
    }

    int line() const { return lineno_; }

private:
    std::string_view text_;
    int lineno_ = 0;
};

inline std::vector<std::string_view> split(std::string_view s)
{
    std::vector<std::string_view> out;
    while (true) {
        const auto b = s.find_first_not_of(" \t");
        if (b == std::string_view::npos) break;
        s.remove_prefix(b);
        const auto e = s.find_first_of(" \t");
        out.push_back(s.substr(0, e));
        if (e == std::string_view::npos) break;
        s.remove_prefix(e);
    }
    return out;
}

}  // namespace detail

/// Parse MSH 2.2 ASCII. Meshes with tetrahedra become a SpaceTimeMesh (z is time, boundary
/// triangles are ignored and facets are recomputed); otherwise a PlanarMesh.
inline MshMesh read_msh(std::string_view text, const RegionTable& regions = region_from_code)
{
    detail::LineReader in(text);
    std::string_view line;
    std::string section;
    auto fail = [&](const std::string& what) {
        throw ParseError("msh " + (section.empty() ? std::string("header") : "$" + section) + " line " +
                         std::to_string(in.line()) + ": " + what);
    };
    auto need = [&](std::string_view& l) {
        if (!in.next(l)) fail("unexpected end of file");
    };
    auto number = [&](std::string_view s) {
        double v = 0.0;
        if (!parse_double(s, v)) fail("bad number '" + std::string(s) + "'");
        return v;
    };
    auto integer = [&](std::string_view s) {
        long long v = 0;
        if (!parse_int(s, v)) fail("bad integer '" + std::string(s) + "'");
        return v;
    };

    bool have_format = false, have_nodes = false, have_elements = false;
    std::unordered_map<long long, int> node_index;
    std::vector<Vec3> nodes;
    std::vector<std::array<int, 3>> tris;
    std::vector<int> tri_tag;
    std::vector<std::array<int, 4>> tets;
    std::vector<int> tet_tag;

    while (in.next(line)) {
        if (line.empty() || line.front() != '$') fail("expected a section header, got '" + std::string(line) + "'");
        section = std::string(line.substr(1));
        const std::string end = "$End" + section;
        if (section == "MeshFormat") {
            need(line);
            const auto f = detail::split(line);
            if (f.size() != 3 || f[0] != "2.2") fail("unsupported format version '" + std::string(line) + "' (need 2.2 0 8)");
            if (f[1] != "0") fail("only ASCII files are supported");
            have_format = true;
            need(line);
            if (line != end) fail("expected " + end);
        } else if (section == "Nodes") {
            if (!have_format) fail("$Nodes before $MeshFormat");
            need(line);
            const auto n = integer(line);
            if (n < 0) fail("negative node count");
            for (long long i = 0; i < n; ++i) {
                need(line);
                if (line.front() == '$') fail("truncated node block: expected " + std::to_string(n) + " nodes, got " + std::to_string(i));
                const auto f = detail::split(line);
                if (f.size() != 4) fail("node line needs id x y z");
                const auto id = integer(f[0]);
                if (!node_index.emplace(id, static_cast<int>(nodes.size())).second) fail("duplicate node id " + std::to_string(id));
                nodes.push_back({number(f[1]), number(f[2]), number(f[3])});
            }
            need(line);
            if (line != end) fail("expected " + end);
            have_nodes = true;
        } else if (section == "Elements") {
            if (!have_nodes) fail("$Elements before $Nodes");
            need(line);
            const auto n = integer(line);
            if (n < 0) fail("negative element count");
            for (long long i = 0; i < n; ++i) {
                need(line);
                if (line.front() == '$') fail("truncated element block: expected " + std::to_string(n) + " elements, got " + std::to_string(i));
                const auto f = detail::split(line);
                if (f.size() < 3) fail("element line too short");
                const auto type = integer(f[1]);
                const auto ntags = integer(f[2]);
                const std::size_t nv = type == 2 ? 3 : type == 4 ? 4 : 0;
                if (nv == 0) fail("unsupported element type " + std::to_string(type) + " (only 2 and 4)");
                if (ntags < 1) fail("element needs a physical tag");
                if (f.size() != 3 + static_cast<std::size_t>(ntags) + nv) fail("element line has the wrong number of fields");
                const int tag = static_cast<int>(integer(f[3]));
                std::array<int, 4> v{};
                for (std::size_t k = 0; k < nv; ++k) {
                    const auto it = node_index.find(integer(f[3 + static_cast<std::size_t>(ntags) + k]));
                    if (it == node_index.end()) fail("element references an unknown node");
                    v[k] = it->second;
                }
                if (nv == 3) {
                    tris.push_back({v[0], v[1], v[2]});
                    tri_tag.push_back(tag);
                } else {
                    tets.push_back(v);
                    tet_tag.push_back(tag);
                }
            }
            need(line);
            if (line != end) fail("expected " + end);
            have_elements = true;
        } else {
            // Other sections ($PhysicalNames, ...) are skipped.
            while (true) {
                need(line);
                if (line == end) break;
            }
        }
    }
    section.clear();
    if (!have_format || !have_nodes || !have_elements) fail("missing $MeshFormat, $Nodes or $Elements");

    auto region = [&](int tag) {
        try {
            return regions(tag);
        } catch (const Error& e) {
            throw ParseError(std::string("msh: ") + e.what());
        }
    };

    if (!tets.empty()) {
        SpaceTimeMesh m;
        m.nodes = nodes;
        m.slice_of_node.assign(nodes.size(), -1);
        m.planar_node_of.assign(nodes.size(), -1);
        for (std::size_t e = 0; e < tets.size(); ++e) {
            auto t = tets[e];
            const double d = det6(nodes[t[0]], nodes[t[1]], nodes[t[2]], nodes[t[3]]);
            if (d == 0.0) throw ParseError("msh: tetrahedron " + std::to_string(e) + " is degenerate");
            if (d < 0.0) std::swap(t[2], t[3]);
            m.tets.push_back(t);
            m.region.push_back(region(tet_tag[e]));
        }
        double tmax = 0.0;
        for (const auto& p : nodes) tmax = std::max(tmax, p.t);
        m.T_final = tmax;
        m.facets = boundary_tag(m);
        return m;
    }

    PlanarMesh p;
    for (const auto& v : nodes) p.nodes.push_back(v.spatial());
    std::map<std::pair<int, int>, int> edge_count;
    for (std::size_t i = 0; i < tris.size(); ++i) {
        auto t = tris[i];
        const double a = cross(p.nodes[t[1]] - p.nodes[t[0]], p.nodes[t[2]] - p.nodes[t[0]]);
        if (a == 0.0) throw ParseError("msh: triangle " + std::to_string(i) + " is degenerate");
        if (a < 0.0) std::swap(t[1], t[2]);
        p.triangles.push_back(t);
        p.region.push_back(region(tri_tag[i]));
        for (int k = 0; k < 3; ++k) ++edge_count[{std::min(t[k], t[(k + 1) % 3]), std::max(t[k], t[(k + 1) % 3])}];
    }
    double rmin = std::numeric_limits<double>::infinity(), rmax = 0.0;
    for (const auto& x : p.nodes) {
        rmin = std::min(rmin, norm(x));
        rmax = std::max(rmax, norm(x));
    }
    const double mid = 0.5 * (rmin + rmax);
    for (const auto& t : p.triangles) {
        for (int k = 0; k < 3; ++k) {
            const int a = t[k], b = t[(k + 1) % 3];
            if (edge_count[{std::min(a, b), std::max(a, b)}] != 1) continue;
            const bool inner = norm(p.nodes[a]) < mid && norm(p.nodes[b]) < mid;
            p.boundary_edges.push_back({a, b, inner ? EdgeTag::Inner : EdgeTag::Outer});
        }
    }
    return p;
}

namespace detail {

inline void write_msh_nodes(std::ostream& out, const std::vector<Vec3>& nodes)
{
    out << "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n" << nodes.size() << "\n";
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        out << i + 1 << ' ' << format_number(nodes[i].x) << ' ' << format_number(nodes[i].y) << ' ' << format_number(nodes[i].t) << "\n";
    }
    out << "$EndNodes\n";
}

}  // namespace detail

inline void write_msh(std::ostream& out, const PlanarMesh& m)
{
    std::vector<Vec3> nodes;
    for (const auto& p : m.nodes) nodes.push_back({p.x, p.y, 0.0});
    detail::write_msh_nodes(out, nodes);
    out << "$Elements\n" << m.triangles.size() << "\n";
    for (std::size_t i = 0; i < m.triangles.size(); ++i) {
        const int tag = region_code(m.region[i]);
        const auto& t = m.triangles[i];
        out << i + 1 << " 2 2 " << tag << ' ' << tag << ' ' << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << "\n";
    }
    out << "$EndElements\n";
}

inline void write_msh(std::ostream& out, const SpaceTimeMesh& m)
{
    detail::write_msh_nodes(out, m.nodes);
    out << "$Elements\n" << m.tets.size() << "\n";
    for (std::size_t i = 0; i < m.tets.size(); ++i) {
        const int tag = region_code(m.region[i]);
        const auto& t = m.tets[i];
        out << i + 1 << " 4 2 " << tag << ' ' << tag << ' ' << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << ' ' << t[3] + 1 << "\n";
    }
    out << "$EndElements\n";
}

}  // namespace rotostep::io
