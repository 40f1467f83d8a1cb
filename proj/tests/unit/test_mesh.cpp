#include "rotostep/mesh.hpp"

#include <gtest/gtest.h>

#include <map>
#include <numbers>
#include <set>

using namespace rotostep;

namespace {

constexpr double pi = std::numbers::pi;

PlanarMesh one_triangle()
{
    PlanarMesh m;
    m.nodes = {{0.03, 0.0}, {0.04, 0.0}, {0.03, 0.01}};
    m.triangles = {{0, 1, 2}};
    m.region = {{RegionKind::RotorIron, 0}};
    return m;
}

SpaceTimeMesh desk_coarse(int slices = 4)
{
    const auto g = MotorGeometry::desk_motor();
    return extrude_twist(triangulate_reference(g, 0.02), g, slices);
}

}  // namespace

TEST(PlanarMesh, AreaMatchesAnnulus)
{
    const auto g = MotorGeometry::desk_motor();
    const auto m = triangulate_reference(g, 0.005);
    const double exact = pi * (g.R * g.R - g.r0 * g.r0);
    EXPECT_LT(m.area(), exact);
    EXPECT_NEAR(m.area() / exact, 1.0, 5e-3);
}

TEST(PlanarMesh, TrianglesAreCounterClockwiseAndInsideAnnulus)
{
    const auto g = MotorGeometry::desk_motor();
    const auto m = triangulate_reference(g, 0.01);
    for (std::size_t i = 0; i < m.triangles.size(); ++i) EXPECT_GT(m.triangle_area(i), 0.0);
    for (const auto& x : m.nodes) {
        EXPECT_GE(norm(x), g.r0 * (1 - 1e-12));
        EXPECT_LE(norm(x), g.R * (1 + 1e-12));
    }
}

TEST(PlanarMesh, RegionsMatchBarycenter)
{
    const auto g = MotorGeometry::desk_motor();
    const auto m = triangulate_reference(g, 0.01);
    ASSERT_EQ(m.region.size(), m.triangles.size());
    std::set<int> magnets;
    for (std::size_t i = 0; i < m.triangles.size(); ++i) {
        const auto& t = m.triangles[i];
        const Vec2 c = (1.0 / 3.0) * (m.nodes[t[0]] + m.nodes[t[1]] + m.nodes[t[2]]);
        EXPECT_EQ(m.region[i], region_of(g, c));
        if (m.region[i].kind == RegionKind::Magnet) magnets.insert(m.region[i].index);
    }
    EXPECT_EQ(static_cast<int>(magnets.size()), g.n_magnets);
}

TEST(PlanarMesh, EdgesAreConforming)
{
    const auto m = triangulate_reference(MotorGeometry::desk_motor(), 0.01);
    std::map<std::pair<int, int>, int> directed;
    for (const auto& t : m.triangles) {
        for (int i = 0; i < 3; ++i) ++directed[{t[i], t[(i + 1) % 3]}];
    }
    std::size_t boundary = 0;
    for (const auto& [e, count] : directed) {
        EXPECT_EQ(count, 1);
        if (!directed.count({e.second, e.first})) ++boundary;
    }
    EXPECT_EQ(boundary, m.boundary_edges.size());
}

TEST(PlanarMesh, RotorInvariantUnderMagnetPitch)
{
    const auto g = MotorGeometry::annulus();
    const auto m = triangulate_reference(g, 0.12);
    std::vector<Vec2> rotor;
    for (const auto& x : m.nodes) {
        if (norm(x) <= g.r2 * (1 + 1e-12)) rotor.push_back(x);
    }
    for (const auto& x : rotor) {
        const Vec2 y = rotate(x, 0.5 * pi);
        bool found = false;
        for (const auto& z : rotor) found = found || norm(z - y) <= 1e-12 * g.R;
        EXPECT_TRUE(found);
    }
}

TEST(PlanarMesh, TooCoarseGapIsRejected)
{
    auto g = MotorGeometry::desk_motor();
    EXPECT_THROW(triangulate_reference(g, 0.0), MeshError);
    EXPECT_THROW(triangulate_reference(g, 0.05), MeshError);
    g.r2 = g.r1 + 0.001;
    EXPECT_THROW(triangulate_reference(g, 0.01), MeshError);
}

TEST(PlanarMesh, ShearedGapKeepsPositiveArea)
{
    const auto g = MotorGeometry::desk_motor();
    const auto m = triangulate_reference(g, 0.01);
    EXPECT_GE(detail::min_area_ratio(g, m, g.T_final), gap_area_ratio_floor);
}

TEST(Extrusion, StraightPrismVolume)
{
    auto g = MotorGeometry::desk_motor();
    g.alpha = 0.0;
    const auto planar = one_triangle();
    const auto m = extrude_twist(planar, g, 1);
    ASSERT_EQ(m.tets.size(), 3u);
    EXPECT_NEAR(m.volume(), planar.area() * g.T_final, 1e-15 * planar.area() * g.T_final);
    const auto rep = validate(m);
    EXPECT_EQ(rep.inverted_count, 0u);
    EXPECT_TRUE(rep.valid());
}

TEST(Extrusion, HandInvertedTetIsCounted)
{
    auto g = MotorGeometry::desk_motor();
    g.alpha = 0.0;
    auto m = extrude_twist(one_triangle(), g, 1);
    std::swap(m.tets[1][2], m.tets[1][3]);
    const auto rep = validate(m);
    EXPECT_EQ(rep.inverted_count, 1u);
    EXPECT_FALSE(rep.valid());
}

TEST(Extrusion, NodesFollowTheDeformation)
{
    const auto g = MotorGeometry::desk_motor();
    const auto m = desk_coarse(4);
    const int np = static_cast<int>(m.n_planar());
    ASSERT_EQ(m.nodes.size(), static_cast<std::size_t>(np) * 5);
    for (int k = 0; k <= 4; ++k) {
        const double t = k * g.T_final / 4;
        for (int p = 0; p < np; ++p) {
            const int id = m.node_at(k, p);
            EXPECT_EQ(m.slice_of_node[id], k);
            EXPECT_EQ(m.planar_node_of[id], p);
            const Vec2 y = deformation(g, t, m.reference.nodes[p]);
            EXPECT_EQ(m.nodes[id].x, y.x);
            EXPECT_EQ(m.nodes[id].y, y.y);
            EXPECT_EQ(m.nodes[id].t, t);
        }
    }
    // A rotor node on the positive axis turns by alpha * t_k.
    for (int p = 0; p < np; ++p) {
        const Vec2 x = m.reference.nodes[p];
        if (x.y != 0.0 || x.x <= 0.0 || x.x >= g.r1) continue;
        const auto y = m.nodes[m.node_at(2, p)];
        EXPECT_NEAR(y.x, x.x * std::cos(g.alpha * g.T_final / 2), 1e-15);
        EXPECT_NEAR(y.y, x.x * std::sin(g.alpha * g.T_final / 2), 1e-15);
    }
}

TEST(Extrusion, DeskMotorThirtySlicesHasNoInvertedTets)
{
    const auto m = desk_coarse(30);
    const auto rep = validate(m);
    EXPECT_EQ(rep.inverted_count, 0u);
    EXPECT_GT(rep.min_volume, 0.0);
    EXPECT_EQ(rep.nonconforming_faces, 0u);
}

TEST(Extrusion, TooFewSlicesIsAMeshError)
{
    const auto g = MotorGeometry::desk_motor();
    EXPECT_THROW(extrude_twist(triangulate_reference(g, 0.02), g, 1), MeshError);
}

TEST(Extrusion, FacetsMatchRecomputedBoundary)
{
    const auto m = desk_coarse(4);
    const auto tagged = boundary_tag(m);
    ASSERT_EQ(tagged.size(), m.facets.size());
    auto count = [](const std::vector<BoundaryFacet>& f, FacetTag tag) {
        return std::count_if(f.begin(), f.end(), [tag](const auto& x) { return x.tag == tag; });
    };
    for (FacetTag tag : {FacetTag::Lateral, FacetTag::Bottom, FacetTag::Top}) EXPECT_EQ(count(tagged, tag), count(m.facets, tag));
    std::set<std::array<int, 3>> a, b;
    for (const auto& f : tagged) {
        auto v = f.nodes;
        std::sort(v.begin(), v.end());
        a.insert(v);
    }
    for (const auto& f : m.facets) {
        auto v = f.nodes;
        std::sort(v.begin(), v.end());
        b.insert(v);
    }
    EXPECT_EQ(a, b);
}

TEST(Extrusion, LateralFacetsLieOnBoundaryCircles)
{
    const auto g = MotorGeometry::desk_motor();
    const auto m = desk_coarse(4);
    for (const auto& f : m.facets) {
        if (f.tag != FacetTag::Lateral) continue;
        const double r = norm(m.nodes[f.nodes[0]].spatial());
        EXPECT_TRUE(std::abs(r - g.r0) < 1e-12 || std::abs(r - g.R) < 1e-12);
        for (int v : f.nodes) EXPECT_NEAR(norm(m.nodes[v].spatial()), r, 1e-12);
    }
}

TEST(Extrusion, VolumeMatchesSlabAreaWithoutTwist)
{
    auto g = MotorGeometry::desk_motor();
    const auto planar = triangulate_reference(g, 0.01);
    g.alpha = 0.0;
    const auto m = extrude_twist(planar, g, 3);
    EXPECT_NEAR(m.volume() / (planar.area() * g.T_final), 1.0, 1e-10);
}

// Straight-sided tets through rotated slices lose a little volume against the swept
// cylinder; the loss shrinks at least linearly with the per-slab rotation.
TEST(Extrusion, TwistedVolumeDeficitShrinksWithSlices)
{
    auto g = MotorGeometry::annulus();
    g.blend = BlendMode::Rigid;
    const auto planar = triangulate_reference(g, 0.12);
    const double exact = planar.area() * g.T_final;
    double prev = 1.0;
    for (int n : {8, 16, 32}) {
        const double deficit = std::abs(1.0 - extrude_twist(planar, g, n).volume() / exact);
        const double slab = g.alpha * g.T_final / n;
        EXPECT_LE(deficit, slab * slab);
        EXPECT_LT(deficit, 0.55 * prev);
        prev = deficit;
    }
}

TEST(Periodic, FullTurnIsIdentityPairing)
{
    auto g = MotorGeometry::annulus();
    g.alpha = 2.0 * pi;
    g.blend = BlendMode::Rigid;
    const auto planar = triangulate_reference(g, 0.12);
    const auto m = extrude_twist(planar, g, 24);
    const auto pairs = pair_periodic(m, g);
    EXPECT_FALSE(pairs.empty());
    for (const auto& [top, bottom] : pairs) EXPECT_EQ(m.planar_node_of[top], m.planar_node_of[bottom]);
}

TEST(Periodic, QuarterTurnIsAFixedPointFreePermutation)
{
    const auto g = MotorGeometry::annulus();
    const auto m = extrude_twist(triangulate_reference(g, 0.12), g, 5);
    const auto pairs = pair_periodic(m, g);
    const auto flag = planar_nodes_where(m.reference, is_conducting);
    EXPECT_EQ(pairs.size(), static_cast<std::size_t>(std::count(flag.begin(), flag.end(), 1)));
    std::set<int> tops, bottoms;
    for (const auto& [top, bottom] : pairs) {
        EXPECT_EQ(m.slice_of_node[top], m.n_slices);
        EXPECT_EQ(m.slice_of_node[bottom], 0);
        EXPECT_NE(m.planar_node_of[top], m.planar_node_of[bottom]);
        EXPECT_TRUE(flag[m.planar_node_of[top]]);
        EXPECT_TRUE(flag[m.planar_node_of[bottom]]);
        const Vec2 a = m.nodes[top].spatial(), b = m.nodes[bottom].spatial();
        EXPECT_LE(norm(a - b), 1e-10 * g.R);
        tops.insert(top);
        bottoms.insert(bottom);
    }
    EXPECT_EQ(tops.size(), pairs.size());
    EXPECT_EQ(bottoms.size(), pairs.size());
}

TEST(Periodic, GapNodesAreNeverPaired)
{
    const auto g = MotorGeometry::annulus();
    const auto m = extrude_twist(triangulate_reference(g, 0.12), g, 5);
    for (const auto& [top, bottom] : pair_periodic(m, g)) {
        const double r = norm(m.reference.nodes[m.planar_node_of[top]]);
        EXPECT_LE(r, g.r1);
        (void)bottom;
    }
}

TEST(Periodic, IncommensurateRotationFails)
{
    auto g = MotorGeometry::annulus();
    g.alpha *= 0.9;
    const auto m = extrude_twist(triangulate_reference(g, 0.12), g, 5);
    EXPECT_THROW(pair_periodic(m, g), MeshError);
}
