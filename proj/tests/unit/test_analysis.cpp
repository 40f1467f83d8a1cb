#include "rotostep/analysis.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace rotostep;

namespace {

struct Fixture {
    MotorGeometry g = MotorGeometry::annulus();
    SpaceTimeMesh mesh;
    MaterialTable mats;
    DofMap dofs;

    Fixture(double sigma, TemporalMode mode = TemporalMode::Initial, double h = 0.12, int slices = 5)
        : mesh(build_spacetime_mesh(g, h, slices, mode == TemporalMode::Periodic)), mats(MaterialTable::uniform(1.0, sigma)),
          dofs(apply_constraints(mode, mesh, mats))
    {
    }
};

std::vector<double> random_vector(std::size_t n, unsigned seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d;
    std::vector<double> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

SolutionField nodal(const SpaceTimeMesh& mesh, const std::function<double(const Vec3&)>& f)
{
    SolutionField u{&mesh, std::vector<double>(mesh.nodes.size())};
    for (std::size_t i = 0; i < mesh.nodes.size(); ++i) u.values[i] = f(mesh.nodes[i]);
    return u;
}

}  // namespace

TEST(Analysis, FluxDensityOfLinearField)
{
    Fixture fx(0.0);
    const auto u = nodal(fx.mesh, [](const Vec3& p) { return 3.0 * p.x - 2.0 * p.y + 5.0 * p.t; });
    for (const auto& b : flux_density(u)) {
        EXPECT_NEAR(b.x, -2.0, 1e-9);
        EXPECT_NEAR(b.y, -3.0, 1e-9);
    }
}

TEST(Analysis, YNormOfLinearField)
{
    Fixture fx(0.0);
    const auto u = nodal(fx.mesh, [](const Vec3& p) { return 3.0 * p.x + 4.0 * p.t; });
    EXPECT_NEAR(y_norm(u, fx.mats), 3.0 * std::sqrt(fx.mesh.volume()), 1e-9);
    auto twice = u;
    for (auto& x : twice.values) x *= -2.0;
    EXPECT_NEAR(y_norm(twice, fx.mats), 2.0 * y_norm(u, fx.mats), 1e-12);
    const auto zero = nodal(fx.mesh, [](const Vec3&) { return 0.0; });
    EXPECT_EQ(y_norm(zero, fx.mats), 0.0);
    EXPECT_THROW(y_norm(u, std::vector<double>(3, 1.0)), Error);
}

TEST(Analysis, XNormReducesToYNormWithoutConductivity)
{
    Fixture fx(0.0);
    Assembler a(fx.mesh, fx.g, fx.mats, fx.dofs, 1);
    const auto x = random_vector(fx.dofs.n_free, 3);
    EXPECT_NEAR(discrete_x_norm(a, x), y_norm(a.field(x), fx.mats), 1e-10 * y_norm(a.field(x), fx.mats));
}

TEST(Analysis, XNormDominatesYNorm)
{
    Fixture fx(1.0);
    Assembler a(fx.mesh, fx.g, fx.mats, fx.dofs, 1);
    const auto op = split_operator(a);
    for (unsigned seed : {1u, 2u, 3u}) {
        const auto x = random_vector(fx.dofs.n_free, seed);
        EXPECT_GE(discrete_x_norm(op, x), y_norm(a.field(x), fx.mats) * (1 - 1e-12));
    }
}

TEST(Analysis, InfSupIsOneWithoutConductivity)
{
    Fixture fx(0.0);
    Assembler a(fx.mesh, fx.g, fx.mats, fx.dofs, 1);
    const auto rep = infsup_constant(a);
    EXPECT_EQ(rep.method, "dense");
    EXPECT_NEAR(rep.c_h, 1.0, 1e-8);
    EXPECT_NEAR(rep.boundedness, 1.0, 1e-8);
    EXPECT_EQ(rep.n_dofs, fx.dofs.n_free);
    EXPECT_GT(rep.h, 0.0);
}

TEST(Analysis, InfSupRejectsNonlinearMaterials)
{
    Fixture fx(1.0);
    const auto mats = MaterialTable::motor_default();
    Assembler a(fx.mesh, fx.g, mats, apply_constraints(TemporalMode::Initial, fx.mesh, mats), 1);
    EXPECT_THROW(infsup_constant(a), ConfigError);
}

// The sup over z of b(u, z) / ||z||_Y is ||A u||_{K^-1}; it never drops below c_h ||u||_X,
// and |b(u, z)| stays below the boundedness constant.
TEST(Analysis, InfSupAndBoundednessHoldForRandomPairs)
{
    for (auto mode : {TemporalMode::Initial, TemporalMode::Periodic}) {
        Fixture fx(1.0, mode);
        Assembler a(fx.mesh, fx.g, fx.mats, fx.dofs, 1);
        const auto rep = infsup_constant(a);
        EXPECT_GE(rep.c_h, 1.0 / std::sqrt(2.0));
        EXPECT_LE(rep.c_h, 1.0 + 1e-9);
        EXPECT_LE(rep.boundedness, std::sqrt(2.0));
        const auto op = split_operator(a);
        CsrMatrix A = op.K;
        for (std::size_t p = 0; p < A.nnz(); ++p) A.val[p] += op.C.val[p];
        const DirectSolver kinv(op.K);
        for (unsigned seed = 10; seed < 20; ++seed) {
            const auto u = random_vector(fx.dofs.n_free, seed);
            const auto z = random_vector(fx.dofs.n_free, seed + 100);
            const auto au = A * u;
            const double sup = std::sqrt(dot(au, kinv.solve(au)));
            const double xu = discrete_x_norm(op, u);
            EXPECT_GE(sup, rep.c_h * xu * (1 - 1e-9));
            const double yz = std::sqrt(dot(z, op.K * z));
            EXPECT_LE(std::abs(dot(z, au)), rep.boundedness * xu * yz * (1 + 1e-9));
        }
    }
}

TEST(Analysis, IterativeInfSupAgreesWithDense)
{
    Fixture fx(1.0);
    Assembler a(fx.mesh, fx.g, fx.mats, fx.dofs, 1);
    const auto op = split_operator(a);
    const auto dense = detail::infsup_dense(op);
    const auto iter = detail::infsup_iterative(op, 600, 1e-10);
    EXPECT_EQ(iter.method, "iterative");
    EXPECT_NEAR(iter.c_h, dense.c_h, 1e-6 * dense.c_h);
    EXPECT_NEAR(iter.boundedness, dense.boundedness, 1e-6 * dense.boundedness);
}

TEST(Analysis, ReynoldsDefectVanishesForZeroAndConstantFields)
{
    Fixture fx(1.0);
    Assembler a(fx.mesh, fx.g, fx.mats, fx.dofs, 1);
    const auto zero = reynolds_check(a, nodal(fx.mesh, [](const Vec3&) { return 0.0; }));
    EXPECT_EQ(zero.defect, 0.0);
    const auto one = reynolds_check(a, nodal(fx.mesh, [](const Vec3&) { return 1.0; }));
    EXPECT_GT(one.top, 0.0);
    EXPECT_NEAR(one.top, one.bottom, 1e-12 * one.top);
    EXPECT_LE(one.defect, 1e-12 * one.top);
    EXPECT_THROW(reynolds_check(a, SolutionField{&fx.mesh, {1.0}}), Error);
}

TEST(Analysis, ReynoldsDefectIsSmallForSmoothField)
{
    Fixture fx(1.0);
    Assembler a(fx.mesh, fx.g, fx.mats, fx.dofs, 1);
    const auto r = reynolds_check(a, nodal(fx.mesh, [](const Vec3& p) { return (1 + p.t) * std::cos(3 * p.x) * std::sin(2 * p.y + 1); }));
    EXPECT_GT(r.top, 0.0);
    EXPECT_LT(r.defect, 1e-2 * r.top);
}

TEST(Analysis, ManufacturedCasesAreConsistent)
{
    for (const auto& c : {ManufacturedCase::static_case(), ManufacturedCase::rigid_case()}) {
        const double t = 0.3 * c.geometry.T_final;
        const Vec2 y{0.7, -0.4};
        const double h = 1e-6;
        const double dx = (c.u(y + Vec2{h, 0}, t) - c.u(y - Vec2{h, 0}, t)) / (2 * h);
        const double dy = (c.u(y + Vec2{0, h}, t) - c.u(y - Vec2{0, h}, t)) / (2 * h);
        const Vec2 g = c.grad_y(y, t);
        EXPECT_NEAR(g.x, dx, 1e-7);
        EXPECT_NEAR(g.y, dy, 1e-7);
        EXPECT_NEAR(c.u(Vec2{c.geometry.r0, 0.0}, t), 0.0, 1e-14);
        EXPECT_NEAR(c.u(Vec2{0.0, c.geometry.R}, t), 0.0, 1e-14);
        EXPECT_EQ(c.u(y, 0.0), 0.0);
    }
}

TEST(Analysis, StaticConvergenceReducesTheError)
{
    SolverConfig cfg;
    cfg.method = LinearMethod::Gmres;
    cfg.rtol = 1e-10;
    cfg.max_iterations = 2000;
    const auto rows = convergence_study(ManufacturedCase::static_case(), 2, cfg);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0].eoc, 0.0);
    EXPECT_EQ(rows[1].n_slices, 2 * rows[0].n_slices);
    EXPECT_LT(rows[1].error, rows[0].error);
    EXPECT_GT(rows[1].eoc, 0.7);
    EXPECT_THROW(convergence_study(ManufacturedCase::static_case(), 1), ConfigError);
}

TEST(Analysis, YErrorVanishesForItsOwnInterpolant)
{
    Fixture fx(0.0);
    const auto u = nodal(fx.mesh, [](const Vec3& p) { return 2.0 * p.x - p.y + p.t; });
    const std::vector<double> nu_e(fx.mesh.tets.size(), 1.0);
    EXPECT_NEAR(y_error(u, [](const Vec2&, double) { return Vec2{2.0, -1.0}; }, nu_e), 0.0, 1e-10);
}

TEST(Analysis, L2NormOfP1Field)
{
    const std::vector<Vec2> nodes{{0, 0}, {1, 0}, {0, 1}};
    const std::vector<std::array<int, 3>> tris{{0, 1, 2}};
    EXPECT_NEAR(l2_norm_p1(nodes, tris, std::vector<double>{1, 1, 1}), std::sqrt(0.5), 1e-15);
    // int of l_0^2 over the triangle is area / 6
    EXPECT_NEAR(l2_norm_p1(nodes, tris, std::vector<double>{1, 0, 0}), std::sqrt(0.5 / 6.0), 1e-15);
}

TEST(Analysis, SliceOracleWithoutSources)
{
    Fixture fx(0.0, TemporalMode::Magnetostatic);
    Assembler a(fx.mesh, fx.g, fx.mats, fx.dofs, 1);
    const auto u = a.field(std::vector<double>(fx.dofs.n_free, 0.0));
    EXPECT_EQ(magnetostatic_slice_oracle(a, LoadTerms::none(), u, 2), 0.0);
    EXPECT_THROW(solve_slice(a, LoadTerms::none(), -1), Error);
    EXPECT_THROW(solve_slice(a, LoadTerms::none(), fx.mesh.n_slices + 1), Error);
}

// With sigma = 0 every slice decouples, so the space-time solution of a time-independent
// load is close to the slice solve everywhere.
TEST(Analysis, SliceOracleMatchesWithoutConductivity)
{
    Fixture fx(0.0, TemporalMode::Magnetostatic, 0.06, 10);
    Assembler a(fx.mesh, fx.g, fx.mats, fx.dofs, 1);
    LoadTerms load;
    load.current = [](const Vec2& y, double, RegionId) { return 1.0 + y.x; };
    const auto sys = a.assemble(a.linear_nu_field(), load);
    const auto sol = solve_linear(sys, SolverConfig{});
    const auto u = a.field(sol.x);
    EXPECT_LT(magnetostatic_slice_oracle(a, load, u, 2), 0.1);
}

// A load built from a discrete field is reproduced exactly by the solve.
TEST(Analysis, DiscreteExactSolutionIsReproduced)
{
    auto c = ManufacturedCase::static_case();
    const auto mesh = build_spacetime_mesh(c.geometry, 0.12, 5);
    const auto dofs = apply_constraints(TemporalMode::Initial, mesh, c.materials);
    Assembler a(mesh, c.geometry, c.materials, dofs, 1);
    const auto x_true = random_vector(dofs.n_free, 42);
    auto sys = a.assemble(a.linear_nu_field(), LoadTerms::none());
    sys.rhs = sys.A * x_true;
    const auto sol = solve_linear(sys, SolverConfig{});
    std::vector<double> diff(x_true.size());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = sol.x[i] - x_true[i];
    EXPECT_LE(y_norm(a.field(diff), c.materials), 1e-10 * y_norm(a.field(x_true), c.materials));
}

// Aliased fields carry the same conducting data at both ends, so only u^T C u remains.
TEST(Analysis, PeriodicReynoldsEndTermsCancel)
{
    Fixture fx(1.0, TemporalMode::Periodic);
    Assembler a(fx.mesh, fx.g, fx.mats, fx.dofs, 1);
    const auto r = reynolds_check(a, a.field(random_vector(fx.dofs.n_free, 9)));
    EXPECT_GT(r.top, 0.0);
    EXPECT_NEAR(r.top, r.bottom, 1e-12 * r.top);
    EXPECT_NEAR(r.defect, std::abs(r.cuu), 1e-12 * r.top);
}
