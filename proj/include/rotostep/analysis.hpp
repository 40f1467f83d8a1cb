#pragma once

// Norms, the discrete inf-sup and boundedness constants, the Reynolds transport defect,
// manufactured-solution convergence studies and the per-slice magnetostatic oracle.

#include "rotostep/assembly.hpp"
#include "rotostep/errors.hpp"
#include "rotostep/geometry.hpp"
#include "rotostep/materials.hpp"
#include "rotostep/mesh.hpp"
#include "rotostep/quadrature.hpp"
#include "rotostep/solver.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

namespace rotostep {

/// B = (du/dy2, -du/dy1) per element.
inline std::vector<Vec2> flux_density(const SolutionField& u)
{
    std::vector<Vec2> b(u.mesh->tets.size());
    for (std::size_t e = 0; e < b.size(); ++e) {
        const Vec2 g = u.spatial_gradient(e);
        b[e] = {g.y, -g.x};
    }
    return b;
}

/// ||u||_Y^2 = sum_e nu_e int_e |grad_y u|^2.
inline double y_norm(const SolutionField& u, std::span<const double> nu_e)
{
    if (nu_e.size() != u.mesh->tets.size()) throw Error("y_norm: nu field needs one value per element");
    double s = 0.0;
    for (std::size_t e = 0; e < nu_e.size(); ++e) {
        const Vec2 g = u.spatial_gradient(e);
        s += nu_e[e] * u.mesh->tet_volume(e) * dot(g, g);
    }
    return std::sqrt(s);
}

inline double y_norm(const SolutionField& u, const MaterialTable& materials)
{
    std::vector<double> nu_e(u.mesh->tets.size());
    for (std::size_t e = 0; e < nu_e.size(); ++e) nu_e[e] = nu(materials.model(u.mesh->region[e]), 0.0);
    return y_norm(u, nu_e);
}

/// Stiffness K and convection C over the free dofs for linear reluctivity.
struct SplitOperator {
    CsrMatrix K;
    CsrMatrix C;
};

inline SplitOperator split_operator(const Assembler& a)
{
    const auto nu_e = a.linear_nu_field();
    return {a.assemble(nu_e, LoadTerms::none(), FormPart::Stiffness).A,
            a.assemble(nu_e, LoadTerms::none(), FormPart::Convection).A};
}

/// sqrt(u^T K u + w^T K w) with K w = C u, for free values u.
inline double discrete_x_norm(const SplitOperator& op, std::span<const double> u)
{
    const auto ku = op.K * u;
    const auto cu = op.C * u;
    const auto w = DirectSolver(op.K).solve(cu);
    return std::sqrt(std::max(0.0, dot(u, ku) + dot(w, cu)));
}

inline double discrete_x_norm(const Assembler& a, std::span<const double> u) { return discrete_x_norm(split_operator(a), u); }

struct InfSupReport {
    double c_h = 0.0;          ///< discrete inf-sup constant
    double boundedness = 0.0;  ///< sup of b(u, z) / (||u||_Xh ||z||_Y)
    double h = 0.0;            ///< largest tet edge
    std::size_t n_dofs = 0;
    std::string method;        ///< "dense" or "iterative"
    int iterations = 0;
};

inline double max_edge_length(const SpaceTimeMesh& mesh)
{
    double h = 0.0;
    for (const auto& t : mesh.tets) {
        for (int i = 0; i < 4; ++i) {
            for (int j = i + 1; j < 4; ++j) h = std::max(h, norm(mesh.nodes[t[i]] - mesh.nodes[t[j]]));
        }
    }
    return h;
}

namespace detail {

inline Eigen::MatrixXd dense(const CsrMatrix& a)
{
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(a.rows), static_cast<Eigen::Index>(a.cols));
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t p = a.row_ptr[i]; p < a.row_ptr[i + 1]; ++p) m(static_cast<Eigen::Index>(i), a.col[p]) += a.val[p];
    }
    return m;
}

/// With B = K + C: B^T K^-1 B = N + C + C^T where N = K + C^T K^-1 C is the X_h Gram matrix.
inline InfSupReport infsup_dense(const SplitOperator& op)
{
    const Eigen::MatrixXd K = dense(op.K);
    const Eigen::MatrixXd C = dense(op.C);
    Eigen::LLT<Eigen::MatrixXd> llt(K);
    if (llt.info() != Eigen::Success) throw SolverError("infsup: stiffness matrix is not positive definite");
    const Eigen::MatrixXd kc = llt.solve(C);
    Eigen::MatrixXd N = K + C.transpose() * kc;
    N = 0.5 * (N + N.transpose()).eval();
    const Eigen::MatrixXd P = N + C + C.transpose();
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(P, N, Eigen::EigenvaluesOnly | Eigen::Ax_lBx);
    if (es.info() != Eigen::Success) throw SolverError("infsup: generalized eigensolver failed");
    const auto& ev = es.eigenvalues();
    InfSupReport rep;
    rep.c_h = std::sqrt(std::max(0.0, ev.minCoeff()));
    rep.boundedness = std::sqrt(std::max(0.0, ev.maxCoeff()));
    rep.method = "dense";
    return rep;
}

/// Extreme eigenvalues of P x = lambda N x by Lanczos on P^-1 N in the P inner product,
/// with full reorthogonalization. P^-1 = B^-1 K B^-T needs only direct solves.
inline InfSupReport infsup_iterative(const SplitOperator& op, int max_iter, double tol)
{
    const std::size_t n = op.K.rows;
    const DirectSolver kinv(op.K);
    CsrMatrix b = op.K;
    for (std::size_t p = 0; p < b.nnz(); ++p) b.val[p] += op.C.val[p];
    const auto bt = b.transposed();
    const DirectSolver binv(b);
    const DirectSolver btinv(bt);
    const auto ct = op.C.transposed();

    auto apply_n = [&](std::span<const double> x) {
        auto y = op.K * x;
        const auto z = ct * kinv.solve(op.C * x);
        for (std::size_t i = 0; i < n; ++i) y[i] += z[i];
        return y;
    };
    auto apply_p = [&](std::span<const double> x) { return bt * kinv.solve(b * x); };
    auto solve_p = [&](std::span<const double> x) { return binv.solve(op.K * btinv.solve(x)); };
    auto scale = [](std::vector<double>& x, double s) {
        for (double& v : x) v *= s;
    };

    std::vector<std::vector<double>> q, pq;
    std::vector<double> alpha, beta;
    {
        std::vector<double> x(n);
        for (std::size_t i = 0; i < n; ++i) x[i] = 1.0 + 0.5 * std::sin(1.0 + 3.0 * static_cast<double>(i));
        auto px = apply_p(x);
        const double s = 1.0 / std::sqrt(dot(x, px));
        scale(x, s);
        scale(px, s);
        q.push_back(std::move(x));
        pq.push_back(std::move(px));
    }

    InfSupReport rep;
    rep.method = "iterative";
    double mu_min = 0.0, mu_max = 0.0;
    const std::size_t m_max = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, max_iter)), n);
    for (std::size_t j = 0; j < m_max; ++j) {
        auto w = solve_p(apply_n(q[j]));
        alpha.push_back(dot(w, pq[j]));
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t i = 0; i <= j; ++i) {
                const double c = dot(w, pq[i]);
                for (std::size_t k = 0; k < n; ++k) w[k] -= c * q[i][k];
            }
        }
        auto pw = apply_p(w);
        const double bj = std::sqrt(std::max(0.0, dot(w, pw)));
        rep.iterations = static_cast<int>(j + 1);

        const auto m = static_cast<Eigen::Index>(alpha.size());
        Eigen::VectorXd d = Eigen::Map<const Eigen::VectorXd>(alpha.data(), m);
        Eigen::VectorXd e = Eigen::VectorXd::Zero(std::max<Eigen::Index>(m - 1, 0));
        for (Eigen::Index i = 0; i + 1 < m; ++i) e(i) = beta[static_cast<std::size_t>(i)];
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
        es.computeFromTridiagonal(d, e, Eigen::ComputeEigenvectors);
        const auto& theta = es.eigenvalues();
        const auto& y = es.eigenvectors();
        mu_min = theta(0);
        mu_max = theta(m - 1);
        const double res_lo = bj * std::abs(y(m - 1, 0));
        const double res_hi = bj * std::abs(y(m - 1, m - 1));
        const bool breakdown = bj <= 1e-14 * std::abs(mu_max);
        if (breakdown || (res_lo <= tol * std::abs(mu_min) && res_hi <= tol * std::abs(mu_max))) break;

        beta.push_back(bj);
        scale(w, 1.0 / bj);
        scale(pw, 1.0 / bj);
        q.push_back(std::move(w));
        pq.push_back(std::move(pw));
    }
    // mu are the eigenvalues of P^-1 N, the reciprocals of lambda.
    rep.c_h = std::sqrt(1.0 / mu_max);
    rep.boundedness = std::sqrt(1.0 / mu_min);
    return rep;
}

}  // namespace detail

/// Inf-sup and boundedness constants of the discrete form with linear reluctivity: square
/// roots of the extreme eigenvalues of (B^T K^-1 B, K + C^T K^-1 C). Dense up to dense_cap
/// unknowns, power iteration beyond.
inline InfSupReport infsup_constant(const Assembler& a, std::size_t dense_cap = 5000, int max_iter = 500, double tol = 1e-10)
{
    if (!a.materials().all_linear()) throw ConfigError("infsup_constant needs linear materials");
    if (a.n_free() == 0) throw SolverError("infsup_constant: no free unknowns");
    const auto op = split_operator(a);
    auto rep = a.n_free() <= dense_cap ? detail::infsup_dense(op) : detail::infsup_iterative(op, max_iter, tol);
    rep.n_dofs = a.n_free();
    rep.h = max_edge_length(a.mesh());
    return rep;
}

struct ReynoldsReport {
    double cuu = 0.0;     ///< u^T C u over all nodes
    double top = 0.0;     ///< 1/2 int_{Omega_con(T)} sigma u^2
    double bottom = 0.0;  ///< 1/2 int_{Omega_con(0)} sigma u^2
    double defect = 0.0;  ///< |cuu - top + bottom|
};

/// Discrete Reynolds transport defect of a nodal field.
inline ReynoldsReport reynolds_check(const Assembler& a, const SolutionField& u)
{
    const auto& mesh = a.mesh();
    if (u.values.size() != mesh.nodes.size()) throw Error("reynolds_check: field does not match the mesh");
    const double tol = detail::time_tolerance(mesh);
    ReynoldsReport rep;
    for (std::size_t e = 0; e < mesh.tets.size(); ++e) {
        const double s = a.sigma(e);
        if (s == 0.0) continue;
        const auto& t = mesh.tets[e];
        const auto m = a.element(e, Tensor2::scalar(0.0));
        for (int i = 0; i < 4; ++i) {
            for (int j = 0; j < 4; ++j) rep.cuu += u.values[static_cast<std::size_t>(t[i])] * m.C[i * 4 + j] * u.values[static_cast<std::size_t>(t[j])];
        }
        // Faces lying in the bottom or top time level.
        for (int skip = 0; skip < 4; ++skip) {
            std::array<int, 3> f{};
            for (int i = 0, c = 0; i < 4; ++i) {
                if (i != skip) f[c++] = t[i];
            }
            const bool bottom = std::all_of(f.begin(), f.end(), [&](int v) { return std::abs(mesh.nodes[v].t) <= tol; });
            const bool top = std::all_of(f.begin(), f.end(), [&](int v) { return std::abs(mesh.nodes[v].t - mesh.T_final) <= tol; });
            if (!bottom && !top) continue;
            const Vec2 p0 = mesh.nodes[f[0]].spatial(), p1 = mesh.nodes[f[1]].spatial(), p2 = mesh.nodes[f[2]].spatial();
            const double area = 0.5 * std::abs(cross(p1 - p0, p2 - p0));
            double sum = 0.0, sq = 0.0;
            for (int v : f) {
                const double x = u.values[static_cast<std::size_t>(v)];
                sum += x;
                sq += x * x;
            }
            const double integral = 0.5 * s * area / 12.0 * (sq + sum * sum);
            (top ? rep.top : rep.bottom) += integral;
        }
    }
    rep.defect = std::abs(rep.cuu - rep.top + rep.bottom);
    return rep;
}

/// Analytic space-time field on the annulus, with the load that makes it an exact solution.
struct ManufacturedCase {
    std::string name;
    MotorGeometry geometry;
    MaterialTable materials;
    double h0 = 0.1;   ///< planar mesh size of the coarsest level
    int slices0 = 4;   ///< time slices of the coarsest level
    TemporalMode mode = TemporalMode::Initial;
    std::function<double(const Vec2&, double)> u;
    std::function<Vec2(const Vec2&, double)> grad_y;
    std::function<double(const Vec2&, double, RegionId)> f;

    /// u = s(t) P(r) Theta(theta) with P vanishing at r0 and R and s(0) = 0, nu = 1 and
    /// sigma = 1 in the magnets. rigid selects psi = 1 with rotation, otherwise alpha = 0.
    static ManufacturedCase polar(bool rigid)
    {
        ManufacturedCase c;
        c.name = rigid ? "rigid" : "static";
        c.geometry = MotorGeometry::annulus();
        if (rigid) {
            c.geometry.blend = BlendMode::Rigid;
        } else {
            c.geometry.alpha = 0.0;
        }
        c.materials = MaterialTable::uniform(1.0, 1.0);
        c.h0 = 0.1;
        c.slices0 = rigid ? 8 : 4;

        const double r0 = c.geometry.r0, L = c.geometry.R - c.geometry.r0, T = c.geometry.T_final;
        const double k = std::numbers::pi / L, w = std::numbers::pi / T;
        const double alpha = c.geometry.alpha;
        const MaterialTable mats = c.materials;
        auto s = [=](double t) { return t / T + std::sin(w * t); };
        auto ds = [=](double t) { return 1.0 / T + w * std::cos(w * t); };
        auto P = [=](double r) { return std::sin(k * (r - r0)); };
        auto dP = [=](double r) { return k * std::cos(k * (r - r0)); };
        auto ddP = [=](double r) { return -k * k * std::sin(k * (r - r0)); };
        auto Th = [](double a) { return std::cos(2.0 * a) + 0.5 * std::sin(3.0 * a); };
        auto dTh = [](double a) { return -2.0 * std::sin(2.0 * a) + 1.5 * std::cos(3.0 * a); };
        auto ddTh = [](double a) { return -4.0 * std::cos(2.0 * a) - 4.5 * std::sin(3.0 * a); };

        c.u = [=](const Vec2& y, double t) { return s(t) * P(norm(y)) * Th(std::atan2(y.y, y.x)); };
        c.grad_y = [=](const Vec2& y, double t) {
            const double r = norm(y), a = std::atan2(y.y, y.x);
            const double ur = s(t) * dP(r) * Th(a), ua = s(t) * P(r) * dTh(a) / r;
            const Vec2 er{std::cos(a), std::sin(a)}, ea{-std::sin(a), std::cos(a)};
            return ur * er + ua * ea;
        };
        c.f = [=](const Vec2& y, double t, RegionId region) {
            const double r = norm(y), a = std::atan2(y.y, y.x);
            const double lap = s(t) * ((ddP(r) + dP(r) / r) * Th(a) + P(r) * ddTh(a) / (r * r));
            // v . grad u = alpha * du/dtheta for the rigid rotation.
            const double material = ds(t) * P(r) * Th(a) + alpha * s(t) * P(r) * dTh(a);
            return mats.sigma(region) * material - nu(mats.model(region), 0.0) * lap;
        };
        return c;
    }

    static ManufacturedCase static_case() { return polar(false); }
    static ManufacturedCase rigid_case() { return polar(true); }
};

/// ||u - u_h||_Y by collapsed-coordinate quadrature on every element.
inline double y_error(const SolutionField& uh, const std::function<Vec2(const Vec2&, double)>& grad,
                      std::span<const double> nu_e, int order = 3)
{
    const auto& mesh = *uh.mesh;
    const auto rule = tet_rule(order);
    double s = 0.0;
    for (std::size_t e = 0; e < mesh.tets.size(); ++e) {
        const auto p = tet_points(mesh, e);
        const auto g = tet_geometry(p);
        const Vec2 gh = uh.spatial_gradient(e);
        for (const auto& q : rule) {
            Vec3 x{};
            for (int k = 0; k < 4; ++k) x += q.bary[k] * p[k];
            const Vec2 d = grad(x.spatial(), x.t) - gh;
            s += nu_e[e] * q.weight * g.volume * dot(d, d);
        }
    }
    return std::sqrt(s);
}

struct ConvergenceRow {
    double h = 0.0;
    int n_slices = 0;
    std::size_t n_dofs = 0;
    double error = 0.0;
    double eoc = 0.0;  ///< 0 on the first row
    double seconds = 0.0;
};

/// Mesh of the annulus at planar size h with n_slices slabs, periodic pairs attached when needed.
inline SpaceTimeMesh build_spacetime_mesh(const MotorGeometry& g, double h, int n_slices, bool periodic = false)
{
    auto mesh = extrude_twist(triangulate_reference(g, h), g, n_slices);
    if (periodic) mesh.periodic_pairs = pair_periodic(mesh, g);
    return mesh;
}

/// Solve the case on `levels` meshes, halving h and the time step each time.
inline std::vector<ConvergenceRow> convergence_study(const ManufacturedCase& c, int levels, const SolverConfig& cfg = {})
{
    if (levels < 2) throw ConfigError("convergence_study: need at least two levels");
    std::vector<ConvergenceRow> rows;
    for (int l = 0; l < levels; ++l) {
        Stopwatch clock;
        const double h = c.h0 / std::pow(2.0, l);
        const int slices = c.slices0 << l;
        const auto mesh = build_spacetime_mesh(c.geometry, h, slices, c.mode == TemporalMode::Periodic);
        const auto dofs = apply_constraints(c.mode, mesh, c.materials);
        Assembler a(mesh, c.geometry, c.materials, dofs, cfg.workers);
        LoadTerms load;
        load.current = c.f;
        load.quadrature = 3;
        const auto nu_e = a.linear_nu_field();
        const auto sys = a.assemble(nu_e, load);
        const auto sol = solve_linear(sys, cfg);
        if (!sol.report.converged()) throw SolverError("convergence_study: linear solve did not converge");
        const auto uh = a.field(sol.x);
        ConvergenceRow row;
        row.h = h;
        row.n_slices = slices;
        row.n_dofs = dofs.n_free;
        row.error = y_error(uh, c.grad_y, nu_e);
        if (!rows.empty()) row.eoc = std::log(rows.back().error / row.error) / std::log(rows.back().h / row.h);
        row.seconds = clock.seconds();
        rows.push_back(row);
    }
    return rows;
}

struct SliceProblem {
    std::vector<Vec2> nodes;
    std::vector<double> u;  ///< static solution, zero on the lateral rings
};

/// Static P1 problem -div(nu grad u) = j + div(nu M-perp) on the slice-k triangulation at
/// time t_k, lateral rings fixed to zero. Sources are evaluated at triangle centroids.
inline SliceProblem solve_slice(const Assembler& a, const LoadTerms& load, int k)
{
    const auto& mesh = a.mesh();
    if (!mesh.has_slices()) throw Error("slice solve needs an extruded mesh");
    if (k < 0 || k > mesh.n_slices) throw Error("slice index " + std::to_string(k) + " out of range");
    const auto& planar = mesh.reference;
    const std::size_t np = planar.nodes.size();
    const double t = mesh.slice_time(k);
    SliceProblem sp;
    sp.nodes.resize(np);
    for (std::size_t p = 0; p < np; ++p) sp.nodes[p] = mesh.nodes[static_cast<std::size_t>(mesh.node_at(k, static_cast<int>(p)))].spatial();

    std::vector<std::int32_t> id(np, 0);
    for (const auto& e : planar.boundary_edges) id[e.a] = id[e.b] = -1;
    std::int32_t n = 0;
    for (auto& v : id) {
        if (v == 0) v = n++;
    }
    std::vector<CsrMatrix::Triplet> trip;
    std::vector<double> rhs(static_cast<std::size_t>(n), 0.0);
    for (std::size_t tri = 0; tri < planar.triangles.size(); ++tri) {
        const auto& tr = planar.triangles[tri];
        const Vec2 x0 = sp.nodes[tr[0]], x1 = sp.nodes[tr[1]], x2 = sp.nodes[tr[2]];
        const double area2 = cross(x1 - x0, x2 - x0);
        if (!(area2 > 0.0)) throw MeshError("slice triangle " + std::to_string(tri) + " is inverted");
        const std::array<Vec2, 3> g{perp(x2 - x1) * (1.0 / area2), perp(x0 - x2) * (1.0 / area2), perp(x1 - x0) * (1.0 / area2)};
        const RegionId r = planar.region[tri];
        const double nu_r = nu(a.materials().model(r), 0.0);
        const Vec2 c = (1.0 / 3.0) * (x0 + x1 + x2);
        const double j = load.current ? load.current(c, t, r) : 0.0;
        const Vec2 m = load.magnetization_perp ? load.magnetization_perp(c, t, r) : Vec2{};
        const double area = 0.5 * area2;
        for (int i = 0; i < 3; ++i) {
            const auto di = id[tr[i]];
            if (di < 0) continue;
            rhs[static_cast<std::size_t>(di)] += area * (j / 3.0 + nu_r * dot(m, g[i]));
            for (int q = 0; q < 3; ++q) {
                const auto dq = id[tr[q]];
                if (dq >= 0) trip.push_back({static_cast<std::size_t>(di), static_cast<std::size_t>(dq), area * nu_r * dot(g[i], g[q])});
            }
        }
    }
    sp.u.assign(np, 0.0);
    if (n == 0) return sp;
    const auto K = CsrMatrix::from_triplets(static_cast<std::size_t>(n), static_cast<std::size_t>(n), std::move(trip));
    const auto x = DirectSolver(K).solve(rhs);
    for (std::size_t p = 0; p < np; ++p) {
        if (id[p] >= 0) sp.u[p] = x[static_cast<std::size_t>(id[p])];
    }
    return sp;
}

/// L2 norm of a P1 field on a triangulation: int u^2 = A/12 (sum u_i^2 + (sum u_i)^2).
inline double l2_norm_p1(const std::vector<Vec2>& nodes, const std::vector<std::array<int, 3>>& tris, std::span<const double> u)
{
    double s = 0.0;
    for (const auto& t : tris) {
        const double area = 0.5 * std::abs(cross(nodes[t[1]] - nodes[t[0]], nodes[t[2]] - nodes[t[0]]));
        double sum = 0.0, sq = 0.0;
        for (int v : t) {
            sum += u[static_cast<std::size_t>(v)];
            sq += u[static_cast<std::size_t>(v)] * u[static_cast<std::size_t>(v)];
        }
        s += area / 12.0 * (sq + sum * sum);
    }
    return std::sqrt(s);
}

/// Relative L2 distance on slice k between the space-time solution and an independent
/// static solve on the slice triangulation. Zero when both vanish.
inline double magnetostatic_slice_oracle(const Assembler& a, const LoadTerms& load, const SolutionField& u, int k)
{
    const auto sp = solve_slice(a, load, k);
    const auto us = u.slice(k);
    std::vector<double> diff(us.size());
    for (std::size_t i = 0; i < us.size(); ++i) diff[i] = sp.u[i] - us[i];
    const auto& tris = a.mesh().reference.triangles;
    const double ref = l2_norm_p1(sp.nodes, tris, sp.u);
    const double d = l2_norm_p1(sp.nodes, tris, diff);
    if (ref == 0.0) return d == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return d / ref;
}

}  // namespace rotostep
