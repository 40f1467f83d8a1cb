#include "rotostep/materials.hpp"

#include <gtest/gtest.h>

#include <numbers>
#include <random>
#include <sstream>

using namespace rotostep;

namespace {

constexpr double pi = std::numbers::pi;

// B -> nu(|B|) B, the field whose derivative is the tangent tensor.
Vec2 h_of(const ReluctivityModel& m, const Vec2& B) { return nu(m, norm(B)) * B; }

}  // namespace

TEST(Materials, TableConstants)
{
    EXPECT_NEAR(nu_vacuum, 795774.715, 1e-3);
    EXPECT_NEAR(nu_magnet_default, 757880.681, 1e-3);
    EXPECT_DOUBLE_EQ(nu_iron_linear, 156.03425793323072);
}

TEST(Materials, BrauerAtZeroIsK1PlusK2)
{
    const BrauerReluctivity b{};
    EXPECT_DOUBLE_EQ(nu(b, 0.0), b.k1 + b.k2);
    EXPECT_DOUBLE_EQ(nu(b, 0.0), nu_iron_linear);
    EXPECT_LE(nu(b, 2.0), nu_vacuum);
}

TEST(Materials, TangentOfConstantIsScalar)
{
    const auto t = tangent_tensor(ConstantReluctivity{42.0}, {0.3, -1.1});
    EXPECT_EQ(t.xx, 42.0);
    EXPECT_EQ(t.xy, 0.0);
    EXPECT_EQ(t.yy, 42.0);
}

TEST(Materials, TangentAtZeroFieldIsNuZero)
{
    const ReluctivityModel m = BrauerReluctivity{};
    const auto t = tangent_tensor(m, {0.0, 0.0});
    EXPECT_EQ(t.xx, nu(m, 0.0));
    EXPECT_EQ(t.xy, 0.0);
    EXPECT_EQ(t.yy, nu(m, 0.0));
}

TEST(Materials, BrauerTangentMatchesFiniteDifferences)
{
    const ReluctivityModel m = BrauerReluctivity{};
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> mag(0.05, 2.5), ang(0.0, 2 * pi);
    for (int i = 0; i < 200; ++i) {
        const double b = mag(rng), a = ang(rng), d = ang(rng);
        const Vec2 B{b * std::cos(a), b * std::sin(a)};
        const Vec2 w{std::cos(d), std::sin(d)};
        const double eps = 1e-6 * b;
        const Vec2 fd = (1.0 / (2 * eps)) * (h_of(m, B + eps * w) - h_of(m, B - eps * w));
        const Vec2 an = tangent_tensor(m, B).apply(w);
        EXPECT_LE(norm(fd - an), 1e-6 * norm(an));
    }
}

TEST(Materials, ShippedModelsAreStronglyMonotone)
{
    std::vector<std::pair<ReluctivityModel, double>> models{
        {ConstantReluctivity{nu_vacuum}, nu_vacuum}, {BrauerReluctivity{}, 0.0},
        {SplineReluctivity({{0.5, 60.0}, {1.0, 150.0}, {1.5, 600.0}, {2.0, 5000.0}}), 0.0}};
    for (const auto& [m, expect] : models) {
        const auto est = validate_monotonicity(m, 3.0, 1000);
        EXPECT_FALSE(est.violated);
        EXPECT_GT(est.monotonicity_est, 0.0);
        EXPECT_GE(est.lipschitz_est, est.monotonicity_est);
        if (expect > 0.0) {
            EXPECT_NEAR(est.monotonicity_est, expect, 1e-9 * expect);
            EXPECT_NEAR(est.lipschitz_est, expect, 1e-9 * expect);
        }
        // Pairwise secant property on a uniform grid.
        const double m_lb = est.monotonicity_est;
        for (int i = 0; i < 1000; i += 37) {
            for (int j = i + 1; j < 1000; j += 53) {
                const double b1 = 3.0 * i / 999, b2 = 3.0 * j / 999;
                const double lhs = (nu(m, b2) * b2 - nu(m, b1) * b1) * (b2 - b1);
                EXPECT_GE(lhs, (1 - 1e-9) * m_lb * (b2 - b1) * (b2 - b1));
            }
        }
    }
}

TEST(Materials, TangentEigenvaluesWithinMonotonicityBounds)
{
    const ReluctivityModel m = BrauerReluctivity{};
    const auto est = validate_monotonicity(m, 3.0, 3000);
    for (double b : {0.1, 0.7, 1.3, 2.0, 2.9}) {
        const auto t = tangent_tensor(m, {b / std::sqrt(2.0), b / std::sqrt(2.0)});
        const double tr = t.xx + t.yy, det = t.xx * t.yy - t.xy * t.xy;
        const double disc = std::sqrt(std::max(0.0, 0.25 * tr * tr - det));
        EXPECT_GE(0.5 * tr - disc, (1 - 1e-6) * est.monotonicity_est);
        EXPECT_LE(0.5 * tr + disc, (1 + 1e-3) * est.lipschitz_est);
    }
}

TEST(Materials, NonMonotoneSplineIsFlagged)
{
    // H drops between 1.0 T and 1.2 T.
    const ReluctivityModel m = SplineReluctivity({{1.0, 500.0}, {1.2, 300.0}, {2.0, 4000.0}});
    EXPECT_TRUE(validate_monotonicity(m, 2.0, 400).violated);
}

TEST(Materials, SplineInterpolatesAndExtrapolates)
{
    const SplineReluctivity s({{0.5, 60.0}, {1.0, 150.0}, {2.0, 5000.0}});
    const ReluctivityModel m = s;
    EXPECT_NEAR(nu(m, 0.5) * 0.5, 60.0, 1e-9);
    EXPECT_NEAR(nu(m, 1.0) * 1.0, 150.0, 1e-9);
    const double h3 = nu(m, 3.0) * 3.0;
    EXPECT_NEAR(h3, 5000.0 + nu_vacuum * 1.0, 1e-6 * h3);
}

TEST(Materials, BhCsvParsing)
{
    std::istringstream ok("B,H\n0.5,60\n1.0,150\n\n2.0,5000\n");
    const auto s = read_bh_csv(ok);
    EXPECT_EQ(s.b_points().size(), 4u);
    std::istringstream bad("B,H\n0.5,60,7\n");
    EXPECT_THROW(read_bh_csv(bad), ParseError);
    std::istringstream empty("B,H\n");
    EXPECT_THROW(read_bh_csv(empty), ParseError);
    EXPECT_THROW(SplineReluctivity({{1.0, 100.0}, {0.5, 200.0}}), ConfigError);
}

TEST(Materials, DefaultTableConductsOnlyInMagnets)
{
    const auto t = MaterialTable::motor_default();
    EXPECT_TRUE(t.conducting({RegionKind::Magnet, 3}));
    EXPECT_EQ(t.sigma({RegionKind::Magnet, 0}), 1e6);
    for (auto k : {RegionKind::RotorIron, RegionKind::RotorAirPocket, RegionKind::AirGap, RegionKind::StatorIron, RegionKind::Coil}) {
        EXPECT_FALSE(t.conducting({k, 0}));
    }
    EXPECT_TRUE(is_conducting({RegionKind::Magnet, 1}));
    EXPECT_FALSE(is_conducting({RegionKind::Coil, 1}));
    EXPECT_FALSE(is_conducting({RegionKind::AirGap, 0}));
    EXPECT_FALSE(t.all_linear());
    const auto lin = t.linearized();
    EXPECT_TRUE(lin.all_linear());
    EXPECT_DOUBLE_EQ(nu(lin.model({RegionKind::StatorIron, 0}), 1.7), nu_iron_linear);
    EXPECT_FALSE(t.without_conductivity().conducting({RegionKind::Magnet, 0}));
    EXPECT_THROW(MaterialTable().set(RegionKind::Coil, {-1.0, ConstantReluctivity{}}), ConfigError);
}

TEST(Materials, ImpressedCurrent)
{
    const auto g = MotorGeometry::desk_motor();
    const auto src = SourceModel::for_geometry(g);
    EXPECT_NEAR(src.frequency, 8.0 * 1000.0 / 60.0, 1e-9);
    EXPECT_EQ(impressed_current(src, {RegionKind::StatorIron, 0}, 0.003), 0.0);
    const double t_peak = 0.25 / src.frequency;
    EXPECT_NEAR(impressed_current(src, {RegionKind::Coil, 0}, t_peak), 1555.0 / src.coil_area, 1e-9 / src.coil_area);
    for (double t : {0.0, 0.0011, 0.0042, 0.0149}) {
        // coils 0, 2 and 4 carry phases A, B and C with the same sign
        const double balanced = impressed_current(src, {RegionKind::Coil, 0}, t) + impressed_current(src, {RegionKind::Coil, 2}, t) +
                                impressed_current(src, {RegionKind::Coil, 4}, t);
        EXPECT_NEAR(balanced, 0.0, 1e-9 * 1555.0 / src.coil_area);
    }
    // every phase appears equally often with both signs
    std::array<int, 3> count{};
    int sign_sum = 0;
    for (int k = 0; k < g.n_coils; ++k) {
        const auto [p, s] = SourceModel::winding(k);
        ++count[p];
        sign_sum += s;
    }
    EXPECT_EQ(count[0], g.n_coils / 3);
    EXPECT_EQ(count[1], g.n_coils / 3);
    EXPECT_EQ(sign_sum, 0);
}

TEST(Materials, MagnetizationAlternatesAndRotates)
{
    const auto g = MotorGeometry::desk_motor();
    const auto src = SourceModel::for_geometry(g);
    const Vec2 zero = magnetization_perp(src, {RegionKind::AirGap, 0});
    EXPECT_EQ(zero.x, 0.0);
    EXPECT_EQ(zero.y, 0.0);
    for (int k = 0; k < g.n_magnets; ++k) {
        const double c = (k + 0.5) * g.magnet_pitch();
        const Vec2 d{std::cos(c), std::sin(c)};
        const Vec2 m = magnetization_perp(src, {RegionKind::Magnet, k});
        const double s = k % 2 == 0 ? 1.0 : -1.0;
        EXPECT_NEAR(m.x, s * 1.216 * -d.y, 1e-15);
        EXPECT_NEAR(m.y, s * 1.216 * d.x, 1e-15);
        EXPECT_NEAR(norm(m), 1.216, 1e-15);
    }
    const double t = 0.004;
    const Vec2 m0 = magnetization_perp(src, {RegionKind::Magnet, 2});
    const Vec2 mt = magnetization_perp(src, g, {RegionKind::Magnet, 2}, t);
    const Vec2 r = rotate(m0, g.alpha * t);
    EXPECT_NEAR(mt.x, r.x, 1e-15);
    EXPECT_NEAR(mt.y, r.y, 1e-15);
}
