#pragma once

// Planar reference triangulation of the annulus and its twisted extrusion into a
// tetrahedral space-time mesh.

#include "rotostep/errors.hpp"
#include "rotostep/geometry.hpp"
#include "rotostep/vec.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace rotostep {

enum class EdgeTag { Inner, Outer };

struct BoundaryEdge {
    int a = 0;
    int b = 0;
    EdgeTag tag = EdgeTag::Inner;
};

struct PlanarMesh {
    std::vector<Vec2> nodes;
    std::vector<std::array<int, 3>> triangles;  ///< counter-clockwise
    std::vector<RegionId> region;               ///< one per triangle
    std::vector<BoundaryEdge> boundary_edges;

    double triangle_area(std::size_t i) const
    {
        const auto& t = triangles[i];
        return 0.5 * cross(nodes[t[1]] - nodes[t[0]], nodes[t[2]] - nodes[t[0]]);
    }

    double area() const
    {
        double a = 0.0;
        for (std::size_t i = 0; i < triangles.size(); ++i) a += triangle_area(i);
        return a;
    }
};

enum class FacetTag { Lateral, Bottom, Top };

struct BoundaryFacet {
    std::array<int, 3> nodes{};
    FacetTag tag = FacetTag::Lateral;
};

struct SpaceTimeMesh {
    std::vector<Vec3> nodes;
    std::vector<std::array<int, 4>> tets;  ///< positively oriented
    std::vector<RegionId> region;          ///< one per tet
    std::vector<BoundaryFacet> facets;
    double T_final = 0.0;
    int n_slices = 0;                ///< 0 for meshes without slice structure
    std::vector<int> slice_of_node;  ///< -1 when the node is not on a slice
    std::vector<int> planar_node_of; ///< -1 when there is no reference planar node
    PlanarMesh reference;            ///< planar mesh the extrusion started from (may be empty)
    std::vector<std::pair<int, int>> periodic_pairs;  ///< (top node, bottom node)

    std::size_t n_planar() const { return reference.nodes.size(); }
    bool has_slices() const { return n_slices > 0 && !reference.nodes.empty(); }

    /// Space-time node of planar node p on slice k (extruded meshes only).
    int node_at(int k, int p) const { return k * static_cast<int>(reference.nodes.size()) + p; }

    double slice_time(int k) const { return k == n_slices ? T_final : T_final * k / n_slices; }

    double tet_volume(std::size_t e) const
    {
        const auto& t = tets[e];
        return det6(nodes[t[0]], nodes[t[1]], nodes[t[2]], nodes[t[3]]) / 6.0;
    }

    double volume() const
    {
        double v = 0.0;
        for (std::size_t e = 0; e < tets.size(); ++e) v += tet_volume(e);
        return v;
    }
};

struct MeshQualityReport {
    double min_volume = 0.0;
    double max_volume = 0.0;
    double min_quality = 0.0;  ///< mean-ratio shape measure in (0, 1]; 1 for a regular tet
    std::size_t inverted_count = 0;
    std::size_t nonconforming_faces = 0;  ///< faces shared by more than two tets

    bool valid() const { return inverted_count == 0 && nonconforming_faces == 0; }
};

namespace detail {

/// Radii of the rings of the structured mesh, with the number of nodes on each ring.
struct Ring {
    double radius;
    int count;
};

inline int layers_for(double length, double h) { return std::max(1, static_cast<int>(std::lround(length / h))); }

inline std::vector<Ring> polar_rings(const MotorGeometry& g, double h, int gap_layers, int gap_min_count = 0)
{
    std::vector<double> breaks_rotor{g.r0, g.magnet_r_in, g.magnet_r_out, g.r1};
    std::vector<double> breaks_stator{g.r2, g.coil_r_in, g.coil_r_out, g.R};

    std::vector<double> radii{g.r0};
    auto add_band = [&](double a, double b, int layers) {
        for (int i = 1; i <= layers; ++i) radii.push_back(i == layers ? b : a + (b - a) * i / layers);
    };
    for (std::size_t i = 0; i + 1 < breaks_rotor.size(); ++i) {
        const double a = breaks_rotor[i], b = breaks_rotor[i + 1];
        if (b > a) add_band(a, b, layers_for(b - a, h));
    }
    add_band(g.r1, g.r2, gap_layers);
    for (std::size_t i = 0; i + 1 < breaks_stator.size(); ++i) {
        const double a = breaks_stator[i], b = breaks_stator[i + 1];
        if (b > a) add_band(a, b, layers_for(b - a, h));
    }

    std::vector<Ring> rings;
    rings.reserve(radii.size());
    for (double r : radii) {
        // Rotor and gap rings repeat every magnet pitch, stator rings every coil pitch.
        const int m = r < g.r2 ? g.n_magnets : g.n_coils;
        const int per_sector = std::max(1, static_cast<int>(std::lround(2.0 * std::numbers::pi * r / (h * m))));
        int count = m * per_sector;
        while (count < 8) count += m;
        if (r >= g.r1 && r <= g.r2) {
            while (count < gap_min_count) count += m;
        }
        rings.push_back({r, count});
    }
    return rings;
}

inline double oriented_area(const std::vector<Vec2>& x, const std::array<int, 3>& t)
{
    return 0.5 * cross(x[t[1]] - x[t[0]], x[t[2]] - x[t[0]]);
}

inline PlanarMesh stitch_rings(const MotorGeometry& g, const std::vector<Ring>& rings)
{
    PlanarMesh mesh;
    std::vector<int> first;
    for (const auto& ring : rings) {
        first.push_back(static_cast<int>(mesh.nodes.size()));
        for (int j = 0; j < ring.count; ++j) {
            const double angle = 2.0 * std::numbers::pi * j / ring.count;
            mesh.nodes.push_back({ring.radius * std::cos(angle), ring.radius * std::sin(angle)});
        }
    }

    auto add_triangle = [&](std::array<int, 3> t) {
        if (detail::oriented_area(mesh.nodes, t) < 0.0) std::swap(t[1], t[2]);
        mesh.triangles.push_back(t);
    };

    for (std::size_t i = 0; i + 1 < rings.size(); ++i) {
        const std::int64_t na = rings[i].count;
        const std::int64_t nb = rings[i + 1].count;
        auto a = [&](std::int64_t j) { return first[i] + static_cast<int>(j % na); };
        auto b = [&](std::int64_t j) { return first[i + 1] + static_cast<int>(j % nb); };
        std::int64_t ja = 0, jb = 0;
        while (ja < na || jb < nb) {
            // Advance along the ring whose next node has the smaller angle; ties advance
            // the outer ring first. (jb+1)/nb <= (ja+1)/na compared in integers.
            const bool outer = jb < nb && (ja == na || (jb + 1) * na <= (ja + 1) * nb);
            if (outer) {
                add_triangle({a(ja), b(jb + 1), b(jb)});
                ++jb;
            } else {
                add_triangle({a(ja), a(ja + 1), b(jb)});
                ++ja;
            }
        }
    }

    mesh.region.reserve(mesh.triangles.size());
    for (const auto& t : mesh.triangles) {
        const Vec2 c = (1.0 / 3.0) * (mesh.nodes[t[0]] + mesh.nodes[t[1]] + mesh.nodes[t[2]]);
        mesh.region.push_back(region_of(g, c));
    }

    const int inner = rings.front().count;
    for (int j = 0; j < inner; ++j) mesh.boundary_edges.push_back({first.front() + j, first.front() + (j + 1) % inner, EdgeTag::Inner});
    const int outer = rings.back().count;
    for (int j = 0; j < outer; ++j) mesh.boundary_edges.push_back({first.back() + j, first.back() + (j + 1) % outer, EdgeTag::Outer});
    return mesh;
}

/// Smallest ratio of deformed to reference area over all triangles at time t.
inline double min_area_ratio(const MotorGeometry& g, const PlanarMesh& mesh, double t)
{
    double worst = std::numeric_limits<double>::infinity();
    std::vector<Vec2> moved(mesh.nodes.size());
    for (std::size_t i = 0; i < moved.size(); ++i) moved[i] = deformation(g, t, mesh.nodes[i]);
    for (std::size_t i = 0; i < mesh.triangles.size(); ++i) {
        worst = std::min(worst, oriented_area(moved, mesh.triangles[i]) / mesh.triangle_area(i));
    }
    return worst;
}

}  // namespace detail

/// Smallest deformed-to-reference area ratio accepted for gap triangles at t = T.
inline constexpr double gap_area_ratio_floor = 0.3;

/// Structured polar triangulation of the reference annulus.
///
/// Every band boundary (magnet band, gap, coil band) is a ring of nodes. Ring node
/// counts are multiples of n_magnets inside r2 and of n_coils from r2 outwards, and
/// nodes sit at angles 2*pi*j/N, so the rotor part is invariant under rotation by one
/// magnet pitch. Neighbouring rings are stitched by an integer-exact angular merge.
///
/// The connectivity is fixed while the gap shears, so the gap receives extra layers
/// until every triangle deformed to t = T keeps gap_area_ratio_floor of its area.
inline PlanarMesh triangulate_reference(const MotorGeometry& g, double h)
{
    g.validate();
    if (!(h > 0.0)) throw MeshError("triangulate_reference: h must be positive");
    if (!(h < 0.5 * (g.r1 - g.r0))) throw MeshError("triangulate_reference: h must be below (r1 - r0)/2");
    const int base = static_cast<int>(std::lround((g.r2 - g.r1) / h));
    if (base < 1) {
        throw MeshError("triangulate_reference: h = " + std::to_string(h) +
                        " is too coarse to place a ring inside the air gap");
    }
    // A layer survives a relative rotation theta only if gap > r * tan(dphi / 2) * theta,
    // so the gap rings get at least 2 pi r2 theta / gap nodes.
    const double theta = g.blend == BlendMode::Standard ? std::abs(g.alpha) * g.T_final : 0.0;
    const int min_count = static_cast<int>(std::ceil(2.0 * std::numbers::pi * g.r2 * theta / (g.r2 - g.r1)));
    for (int layers = base; layers <= 64 * base + 64; ++layers) {
        auto mesh = detail::stitch_rings(g, detail::polar_rings(g, h, layers, min_count));
        if (detail::min_area_ratio(g, mesh, g.T_final) >= gap_area_ratio_floor) return mesh;
    }
    throw MeshError("triangulate_reference: no gap layering keeps the sheared gap valid; reduce alpha * T_final");
}

namespace detail {

/// Prism over the planar triangle a < b < c between two slices, split so that every
/// quadrilateral side uses the diagonal from its smallest global index. Adjacent
/// prisms therefore agree on shared faces.
inline std::array<std::array<int, 4>, 3> split_prism(int a0, int b0, int c0, int a1, int b1, int c1)
{
    return {{{a0, a1, b1, c1}, {a0, b0, c0, c1}, {a0, b0, c1, b1}}};
}

}  // namespace detail

/// Extrude the planar mesh through n_slices time slabs, placing the slice-k copy of
/// planar node x at deformation(g, t_k, x).
///
/// Tet orientation is fixed on the untwisted prism; a tet that turns non-positive after
/// twisting raises MeshError.
inline SpaceTimeMesh extrude_twist(const PlanarMesh& planar, const MotorGeometry& g, int n_slices)
{
    g.validate();
    if (n_slices < 1) throw MeshError("extrude_twist: n_slices must be at least 1");
    if (planar.region.size() != planar.triangles.size()) throw MeshError("extrude_twist: region array size mismatch");

    SpaceTimeMesh mesh;
    mesh.reference = planar;
    mesh.T_final = g.T_final;
    mesh.n_slices = n_slices;
    const int np = static_cast<int>(planar.nodes.size());
    const std::size_t n_nodes = static_cast<std::size_t>(np) * (n_slices + 1);
    mesh.nodes.reserve(n_nodes);
    mesh.slice_of_node.reserve(n_nodes);
    mesh.planar_node_of.reserve(n_nodes);
    for (int k = 0; k <= n_slices; ++k) {
        const double t = mesh.slice_time(k);
        for (int p = 0; p < np; ++p) {
            const Vec2 y = deformation(g, t, planar.nodes[p]);
            mesh.nodes.push_back({y.x, y.y, t});
            mesh.slice_of_node.push_back(k);
            mesh.planar_node_of.push_back(p);
        }
    }

    auto straight = [&](int id) {
        const int p = id % np;
        return Vec3{planar.nodes[p].x, planar.nodes[p].y, mesh.nodes[id].t};
    };

    mesh.tets.reserve(planar.triangles.size() * 3 * n_slices);
    mesh.region.reserve(planar.triangles.size() * 3 * n_slices);
    for (int k = 0; k < n_slices; ++k) {
        for (std::size_t tri = 0; tri < planar.triangles.size(); ++tri) {
            auto s = planar.triangles[tri];
            std::sort(s.begin(), s.end());
            const int lo = k * np, hi = (k + 1) * np;
            for (auto tet : detail::split_prism(lo + s[0], lo + s[1], lo + s[2], hi + s[0], hi + s[1], hi + s[2])) {
                if (det6(straight(tet[0]), straight(tet[1]), straight(tet[2]), straight(tet[3])) < 0.0) {
                    std::swap(tet[2], tet[3]);
                }
                if (!(det6(mesh.nodes[tet[0]], mesh.nodes[tet[1]], mesh.nodes[tet[2]], mesh.nodes[tet[3]]) > 0.0)) {
                    throw MeshError("extrude_twist: inverted tetrahedron in prism over triangle " +
                                    std::to_string(tri) + " in slab " + std::to_string(k) +
                                    "; the per-slice rotation is too large, increase n_slices");
                }
                mesh.tets.push_back(tet);
                mesh.region.push_back(planar.region[tri]);
            }
        }
    }

    for (const auto& t : planar.triangles) {
        mesh.facets.push_back({{t[0], t[1], t[2]}, FacetTag::Bottom});
    }
    for (const auto& t : planar.triangles) {
        const int off = n_slices * np;
        mesh.facets.push_back({{off + t[0], off + t[1], off + t[2]}, FacetTag::Top});
    }
    for (int k = 0; k < n_slices; ++k) {
        for (const auto& e : planar.boundary_edges) {
            const int p = std::min(e.a, e.b), q = std::max(e.a, e.b);
            const int p0 = k * np + p, q0 = k * np + q, p1 = (k + 1) * np + p, q1 = (k + 1) * np + q;
            mesh.facets.push_back({{p0, q0, q1}, FacetTag::Lateral});
            mesh.facets.push_back({{p0, q1, p1}, FacetTag::Lateral});
        }
    }
    return mesh;
}

/// Planar nodes touching a triangle whose region satisfies the predicate.
inline std::vector<char> planar_nodes_where(const PlanarMesh& planar, const std::function<bool(RegionId)>& pred)
{
    std::vector<char> flag(planar.nodes.size(), 0);
    for (std::size_t i = 0; i < planar.triangles.size(); ++i) {
        if (!pred(planar.region[i])) continue;
        for (int v : planar.triangles[i]) flag[v] = 1;
    }
    return flag;
}

/// Pair every conducting node of the top slice with the bottom-slice node at the same
/// spatial position. Non-conducting nodes are never paired.
inline std::vector<std::pair<int, int>> pair_periodic(const SpaceTimeMesh& mesh, const MotorGeometry& g,
                                                      const std::function<bool(RegionId)>& conducting = is_conducting)
{
    if (!mesh.has_slices()) throw MeshError("pair_periodic: mesh has no slice structure");
    const auto& planar = mesh.reference;
    const double tol = 1e-10 * g.R;
    const double cell = 1e-6 * g.R;

    auto key = [&](double x, double y) {
        return std::pair<std::int64_t, std::int64_t>{static_cast<std::int64_t>(std::floor(x / cell)),
                                                     static_cast<std::int64_t>(std::floor(y / cell))};
    };
    std::map<std::pair<std::int64_t, std::int64_t>, std::vector<int>> grid;
    for (int p = 0; p < static_cast<int>(planar.nodes.size()); ++p) {
        grid[key(planar.nodes[p].x, planar.nodes[p].y)].push_back(p);
    }

    const auto flag = planar_nodes_where(planar, conducting);
    std::vector<std::pair<int, int>> pairs;
    for (int p = 0; p < static_cast<int>(planar.nodes.size()); ++p) {
        if (!flag[p]) continue;
        const int top = mesh.node_at(mesh.n_slices, p);
        const Vec2 y = mesh.nodes[top].spatial();
        const auto [kx, ky] = key(y.x, y.y);
        int match = -1;
        for (std::int64_t dx = -1; dx <= 1 && match < 0; ++dx) {
            for (std::int64_t dy = -1; dy <= 1 && match < 0; ++dy) {
                auto it = grid.find({kx + dx, ky + dy});
                if (it == grid.end()) continue;
                for (int q : it->second) {
                    if (norm(planar.nodes[q] - y) <= tol) {
                        match = q;
                        break;
                    }
                }
            }
        }
        if (match < 0) {
            throw MeshError("pair_periodic: conducting node " + std::to_string(p) +
                            " has no bottom-slice partner; alpha*T must be a multiple of the rotor mesh period");
        }
        pairs.emplace_back(top, mesh.node_at(0, match));
    }
    return pairs;
}

namespace detail {

struct FaceKey {
    std::array<int, 3> v;
    friend bool operator==(const FaceKey&, const FaceKey&) = default;
};

struct FaceKeyHash {
    std::size_t operator()(const FaceKey& k) const
    {
        std::uint64_t h = 1469598103934665603ull;
        for (int x : k.v) {
            h ^= static_cast<std::uint64_t>(x);
            h *= 1099511628211ull;
        }
        return static_cast<std::size_t>(h);
    }
};

inline FaceKey sorted_face(int a, int b, int c)
{
    std::array<int, 3> v{a, b, c};
    std::sort(v.begin(), v.end());
    return {v};
}

inline std::unordered_map<FaceKey, int, FaceKeyHash> face_counts(const SpaceTimeMesh& mesh)
{
    std::unordered_map<FaceKey, int, FaceKeyHash> counts;
    counts.reserve(mesh.tets.size() * 3);
    for (const auto& t : mesh.tets) {
        ++counts[sorted_face(t[1], t[2], t[3])];
        ++counts[sorted_face(t[0], t[2], t[3])];
        ++counts[sorted_face(t[0], t[1], t[3])];
        ++counts[sorted_face(t[0], t[1], t[2])];
    }
    return counts;
}

inline double mean_ratio(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d)
{
    const double v = det6(a, b, c, d) / 6.0;
    if (v <= 0.0) return 0.0;
    const Vec3 e[6] = {b - a, c - a, d - a, c - b, d - b, d - c};
    double sum = 0.0;
    for (const auto& x : e) sum += dot(x, x);
    return 12.0 * std::pow(3.0 * v, 2.0 / 3.0) / sum;
}

}  // namespace detail

inline MeshQualityReport validate(const SpaceTimeMesh& mesh)
{
    MeshQualityReport rep;
    rep.min_volume = std::numeric_limits<double>::infinity();
    rep.max_volume = -std::numeric_limits<double>::infinity();
    rep.min_quality = std::numeric_limits<double>::infinity();
    for (std::size_t e = 0; e < mesh.tets.size(); ++e) {
        const auto& t = mesh.tets[e];
        const double v = mesh.tet_volume(e);
        rep.min_volume = std::min(rep.min_volume, v);
        rep.max_volume = std::max(rep.max_volume, v);
        if (v <= 0.0) ++rep.inverted_count;
        rep.min_quality = std::min(
            rep.min_quality, detail::mean_ratio(mesh.nodes[t[0]], mesh.nodes[t[1]], mesh.nodes[t[2]], mesh.nodes[t[3]]));
    }
    for (const auto& [face, count] : detail::face_counts(mesh)) {
        if (count > 2) ++rep.nonconforming_faces;
    }
    if (mesh.tets.empty()) rep.min_volume = rep.max_volume = rep.min_quality = 0.0;
    return rep;
}

/// Boundary facets recomputed from the tets: faces owned by one tet, tagged Bottom or Top
/// when all three nodes sit at t = 0 or t = T, Lateral otherwise. Orientation follows
/// the owning tet (outward normal).
inline std::vector<BoundaryFacet> boundary_tag(const SpaceTimeMesh& mesh)
{
    const auto counts = detail::face_counts(mesh);
    const double tol = 1e-12 * std::max(1.0, std::abs(mesh.T_final));
    std::vector<BoundaryFacet> out;
    for (const auto& t : mesh.tets) {
        // Face opposite vertex i, listed so that its normal points away from vertex i.
        const std::array<std::array<int, 3>, 4> faces{{{t[1], t[2], t[3]}, {t[0], t[3], t[2]}, {t[0], t[1], t[3]}, {t[0], t[2], t[1]}}};
        for (const auto& f : faces) {
            if (counts.at(detail::sorted_face(f[0], f[1], f[2])) != 1) continue;
            auto at = [&](double level) {
                return std::all_of(f.begin(), f.end(), [&](int v) { return std::abs(mesh.nodes[v].t - level) <= tol; });
            };
            FacetTag tag = FacetTag::Lateral;
            if (at(0.0)) tag = FacetTag::Bottom;
            else if (at(mesh.T_final)) tag = FacetTag::Top;
            out.push_back({f, tag});
        }
    }
    return out;
}

}  // namespace rotostep
