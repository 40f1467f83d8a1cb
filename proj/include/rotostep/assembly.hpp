#pragma once

// P1 space-time assembly of b(u, z) = (nu grad_y u, grad_y z) + (sigma (d_t u + v . grad_y u), z)
// over a constrained dof map, with the load vector and the nonlinear residual/Jacobian.

#include "rotostep/errors.hpp"
#include "rotostep/geometry.hpp"
#include "rotostep/materials.hpp"
#include "rotostep/mesh.hpp"
#include "rotostep/parallel.hpp"
#include "rotostep/quadrature.hpp"
#include "rotostep/sparse.hpp"
#include "rotostep/vec.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace rotostep {

enum class TemporalMode {
    Initial,        ///< u(x, 0) = 0 on conducting material
    Periodic,       ///< u(x, T) = u(x, 0) on conducting material
    Magnetostatic,  ///< sigma = 0 everywhere, no temporal condition
};

inline const char* mode_name(TemporalMode m)
{
    switch (m) {
    case TemporalMode::Initial: return "initial";
    case TemporalMode::Periodic: return "periodic";
    case TemporalMode::Magnetostatic: return "magnetostatic";
    }
    return "unknown";
}

/// Node to unknown map. A node is free (own dof), a periodic alias (dof of its bottom
/// partner) or constrained to a fixed value.
struct DofMap {
    TemporalMode mode = TemporalMode::Initial;
    std::vector<std::int32_t> dof;  ///< per node; -1 when constrained
    std::vector<double> fixed;      ///< per node; value used when dof < 0
    std::vector<char> alias;        ///< per node; 1 for periodic aliases
    std::vector<int> owner;         ///< per dof; the node that owns it
    std::size_t n_free = 0;

    std::size_t n_nodes() const { return dof.size(); }
    bool constrained(std::size_t node) const { return dof[node] < 0; }

    std::size_t n_constrained() const
    {
        return static_cast<std::size_t>(std::count_if(dof.begin(), dof.end(), [](auto d) { return d < 0; }));
    }

    std::size_t n_aliases() const { return static_cast<std::size_t>(std::count(alias.begin(), alias.end(), 1)); }

    /// Nodal values from free values, constraints filled in.
    std::vector<double> to_full(std::span<const double> x) const
    {
        if (x.size() != n_free) throw Error("DofMap::to_full: expected " + std::to_string(n_free) + " values");
        std::vector<double> u(dof.size());
        for (std::size_t i = 0; i < dof.size(); ++i) u[i] = dof[i] < 0 ? fixed[i] : x[static_cast<std::size_t>(dof[i])];
        return u;
    }

    /// Free values taken from the owning nodes.
    std::vector<double> to_free(std::span<const double> u) const
    {
        if (u.size() != dof.size()) throw Error("DofMap::to_free: expected one value per node");
        std::vector<double> x(n_free);
        for (std::size_t d = 0; d < n_free; ++d) x[d] = u[static_cast<std::size_t>(owner[d])];
        return x;
    }
};

namespace detail {

inline double time_tolerance(const SpaceTimeMesh& mesh) { return 1e-12 * std::max(1.0, std::abs(mesh.T_final)); }

/// Nodes that belong to a tet of a conducting region and sit at time level t.
inline std::vector<char> conducting_nodes_at(const SpaceTimeMesh& mesh, const MaterialTable& materials, double t)
{
    const double tol = time_tolerance(mesh);
    std::vector<char> flag(mesh.nodes.size(), 0);
    for (std::size_t e = 0; e < mesh.tets.size(); ++e) {
        if (!materials.conducting(mesh.region[e])) continue;
        for (int v : mesh.tets[e]) {
            if (std::abs(mesh.nodes[v].t - t) <= tol) flag[v] = 1;
        }
    }
    return flag;
}

}  // namespace detail

/// Dof map for a temporal mode. Lateral nodes (|y| = r0 or R) are fixed to 0 in every
/// mode and take precedence over temporal conditions.
inline DofMap apply_constraints(TemporalMode mode, const SpaceTimeMesh& mesh, const MaterialTable& materials)
{
    const std::size_t n = mesh.nodes.size();
    DofMap map;
    map.mode = mode;
    map.fixed.assign(n, 0.0);
    map.alias.assign(n, 0);
    std::vector<char> fixed(n, 0);

    const auto facets = mesh.facets.empty() ? boundary_tag(mesh) : mesh.facets;
    for (const auto& f : facets) {
        if (f.tag != FacetTag::Lateral) continue;
        for (int v : f.nodes) fixed[v] = 1;
    }

    std::vector<int> master(n, -1);
    if (mode == TemporalMode::Initial) {
        const auto bottom = detail::conducting_nodes_at(mesh, materials, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            if (bottom[i]) fixed[i] = 1;
        }
    } else if (mode == TemporalMode::Periodic) {
        const auto top = detail::conducting_nodes_at(mesh, materials, mesh.T_final);
        const double tol = detail::time_tolerance(mesh);
        for (const auto& [t, b] : mesh.periodic_pairs) {
            if (std::abs(mesh.nodes[t].t - mesh.T_final) > tol || std::abs(mesh.nodes[b].t) > tol) {
                throw MeshError("periodic pair (" + std::to_string(t) + ", " + std::to_string(b) +
                                ") does not join the top and bottom slices");
            }
            master[t] = b;
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (top[i] && master[i] < 0) {
                throw MeshError("periodic mode: conducting top node " + std::to_string(i) +
                                " has no partner; run pair_periodic on the mesh first");
            }
        }
    }

    map.dof.assign(n, -1);
    for (std::size_t i = 0; i < n; ++i) {
        if (fixed[i] || master[i] >= 0) continue;
        map.dof[i] = static_cast<std::int32_t>(map.n_free++);
        map.owner.push_back(static_cast<int>(i));
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (master[i] < 0 || fixed[i]) continue;
        map.alias[i] = 1;
        map.dof[i] = map.dof[static_cast<std::size_t>(master[i])];
        map.fixed[i] = map.fixed[static_cast<std::size_t>(master[i])];
    }
    if (map.n_free > static_cast<std::size_t>(std::numeric_limits<std::int32_t>::max())) {
        throw Error("apply_constraints: too many unknowns for 32-bit column indices");
    }
    return map;
}

/// Nodal coefficients over all mesh nodes, constrained values included.
struct SolutionField {
    const SpaceTimeMesh* mesh = nullptr;
    std::vector<double> values;

    /// Space-time gradient on element e (constant for P1).
    Vec3 gradient(std::size_t e) const;
    Vec2 spatial_gradient(std::size_t e) const { return gradient(e).spatial(); }

    /// Values on the planar nodes of slice k.
    std::vector<double> slice(int k) const
    {
        if (!mesh || !mesh->has_slices()) throw Error("SolutionField::slice: mesh has no slice structure");
        if (k < 0 || k > mesh->n_slices) {
            throw Error("SolutionField::slice: slice " + std::to_string(k) + " outside [0, " +
                        std::to_string(mesh->n_slices) + "]");
        }
        const std::size_t np = mesh->n_planar();
        return {values.begin() + static_cast<std::ptrdiff_t>(k * np),
                values.begin() + static_cast<std::ptrdiff_t>((k + 1) * np)};
    }
};

struct TetGeometry {
    double volume = 0.0;
    std::array<Vec3, 4> grad{};  ///< gradients of the barycentric coordinates
};

inline TetGeometry tet_geometry(const std::array<Vec3, 4>& p)
{
    const Vec3 a = p[1] - p[0], b = p[2] - p[0], c = p[3] - p[0];
    const Vec3 bc = cross(b, c), ca = cross(c, a), ab = cross(a, b);
    const double det = dot(a, bc);
    if (!(det > 1e-13 * norm(a) * norm(b) * norm(c))) throw MeshError("degenerate or inverted tetrahedron");
    TetGeometry g;
    g.volume = det / 6.0;
    g.grad[1] = (1.0 / det) * bc;
    g.grad[2] = (1.0 / det) * ca;
    g.grad[3] = (1.0 / det) * ab;
    g.grad[0] = -1.0 * (g.grad[1] + g.grad[2] + g.grad[3]);
    return g;
}

inline std::array<Vec3, 4> tet_points(const SpaceTimeMesh& mesh, std::size_t e)
{
    const auto& t = mesh.tets[e];
    return {mesh.nodes[t[0]], mesh.nodes[t[1]], mesh.nodes[t[2]], mesh.nodes[t[3]]};
}

inline Vec3 SolutionField::gradient(std::size_t e) const
{
    const auto g = tet_geometry(tet_points(*mesh, e));
    Vec3 s;
    for (int i = 0; i < 4; ++i) s += values[static_cast<std::size_t>(mesh->tets[e][i])] * g.grad[i];
    return s;
}

using Mat4 = std::array<double, 16>;

struct ElementMatrices {
    Mat4 K{};  ///< nu grad_y u . grad_y z
    Mat4 C{};  ///< sigma (d_t u + v . grad_y u) z
};

/// Velocity at the four vertices; interpolated linearly inside the element.
inline std::array<Vec2, 4> velocity_quadrature(const std::array<Vec3, 4>& p, const MotorGeometry& g)
{
    std::array<Vec2, 4> v{};
    for (int k = 0; k < 4; ++k) v[k] = velocity(g, std::clamp(p[k].t, 0.0, g.T_final), p[k].spatial());
    return v;
}

/// Element matrices with rows as test functions. The convection term integrates the
/// linear interpolant of the vertex velocities exactly: int l_i l_k = V (1 + delta_ik) / 20.
inline ElementMatrices element_matrices(const std::array<Vec3, 4>& p, double sigma, const Tensor2& nu_tensor,
                                        const std::array<Vec2, 4>& v)
{
    const auto g = tet_geometry(p);
    ElementMatrices m;
    std::array<Vec2, 4> gs{}, tg{};
    for (int i = 0; i < 4; ++i) {
        gs[i] = g.grad[i].spatial();
        tg[i] = nu_tensor.apply(gs[i]);
    }
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) m.K[i * 4 + j] = g.volume * dot(gs[i], tg[j]);
    }
    if (sigma == 0.0) return m;
    std::array<std::array<double, 4>, 4> vg{};  // vg[k][j] = v_k . grad_y l_j
    for (int k = 0; k < 4; ++k) {
        for (int j = 0; j < 4; ++j) vg[k][j] = dot(v[k], gs[j]);
    }
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
            double conv = 0.0;
            for (int k = 0; k < 4; ++k) conv += vg[k][j] * (k == i ? 2.0 : 1.0);
            m.C[i * 4 + j] = sigma * g.volume * (0.25 * g.grad[j].t + conv / 20.0);
        }
    }
    return m;
}

/// Volume sources: impressed current density j_i and the magnetization term M-perp, both
/// evaluated at spatial point y, time t, on an element of the given reference region.
struct LoadTerms {
    std::function<double(const Vec2&, double, RegionId)> current;
    std::function<Vec2(const Vec2&, double, RegionId)> magnetization_perp;
    int quadrature = 2;  ///< Gauss points per collapsed direction

    static LoadTerms none() { return {}; }

    static LoadTerms motor(const SourceModel& src, const MotorGeometry& g)
    {
        LoadTerms l;
        l.current = [src](const Vec2&, double t, RegionId r) { return impressed_current(src, r, t); };
        l.magnetization_perp = [src, g](const Vec2&, double t, RegionId r) { return rotostep::magnetization_perp(src, g, r, t); };
        return l;
    }

    bool empty() const { return !current && !magnetization_perp; }
};

struct LinearSystem {
    CsrMatrix A;
    std::vector<double> rhs;
    const DofMap* dofs = nullptr;
};

/// Which part of the bilinear form to assemble.
enum class FormPart { Full, Stiffness, Convection };

/// Assembly over a fixed mesh and dof map.
///
/// Element work runs in parallel; every matrix entry and load component is then summed
/// by one worker in element order, so the result does not depend on the worker count.
class Assembler {
public:
    Assembler(const SpaceTimeMesh& mesh, const MotorGeometry& geom, const MaterialTable& materials, const DofMap& dofs,
              int workers = default_workers())
        : mesh_(mesh), geom_(geom), materials_(materials), dofs_(dofs), workers_(std::max(1, workers))
    {
        if (dofs.n_nodes() != mesh.nodes.size()) throw Error("Assembler: dof map does not match the mesh");
        if (mesh.region.size() != mesh.tets.size()) throw Error("Assembler: region array does not match the tets");
        build_plan();
    }

    const SpaceTimeMesh& mesh() const { return mesh_; }
    const MotorGeometry& geometry() const { return geom_; }
    const MaterialTable& materials() const { return materials_; }
    const DofMap& dofs() const { return dofs_; }
    std::size_t n_free() const { return dofs_.n_free; }
    int workers() const { return workers_; }
    void set_workers(int w) { workers_ = std::max(1, w); }

    double sigma(std::size_t e) const
    {
        return dofs_.mode == TemporalMode::Magnetostatic ? 0.0 : materials_.sigma(mesh_.region[e]);
    }

    /// nu(0) per element.
    std::vector<double> linear_nu_field() const
    {
        std::vector<double> nu_e(mesh_.tets.size());
        for (std::size_t e = 0; e < nu_e.size(); ++e) nu_e[e] = nu(materials_.model(mesh_.region[e]), 0.0);
        return nu_e;
    }

    /// nu(|B|) per element with B the flux density of u.
    std::vector<double> nu_field(const SolutionField& u) const
    {
        std::vector<double> nu_e(mesh_.tets.size());
        parallel_for(nu_e.size(), workers_, [&](std::size_t b, std::size_t end) {
            for (std::size_t e = b; e < end; ++e) nu_e[e] = nu(materials_.model(mesh_.region[e]), norm(u.spatial_gradient(e)));
        });
        check_finite(nu_e, "reluctivity");
        return nu_e;
    }

    /// Operator and lifted load over the free dofs with a per-element scalar reluctivity.
    LinearSystem assemble(std::span<const double> nu_e, const LoadTerms& load, FormPart part = FormPart::Full) const
    {
        if (nu_e.size() != mesh_.tets.size()) throw Error("assemble: nu field needs one value per element");
        check_finite(nu_e, "reluctivity");
        const auto rule = tet_rule(std::max(2, load.quadrature));
        return gather([&](std::size_t e, Mat4& ae, std::array<double, 4>& fe) {
            const auto m = element(e, Tensor2::scalar(nu_e[e]));
            for (int k = 0; k < 16; ++k) ae[k] = combine(m, k, part);
            fe = element_load(e, nu_e[e], load, rule);
        });
    }

    /// Load vector over the free dofs, without constraint lift.
    std::vector<double> load_vector(const LoadTerms& load) const
    {
        const auto nu_e = linear_nu_field();
        const auto rule = tet_rule(std::max(2, load.quadrature));
        return gather_vector([&](std::size_t e, std::array<double, 4>& fe) { fe = element_load(e, nu_e[e], load, rule); });
    }

    /// Nonlinear residual b(u; u, z_i) - f_i over the free dofs.
    std::vector<double> residual(const SolutionField& u, std::span<const double> load) const
    {
        check_field(u);
        if (load.size() != dofs_.n_free) throw Error("residual: load vector has the wrong size");
        auto res = gather_vector([&](std::size_t e, std::array<double, 4>& r) {
            const auto& t = mesh_.tets[e];
            const auto p = tet_points(mesh_, e);
            const auto g = tet_geometry(p);
            Vec2 grad{};
            for (int i = 0; i < 4; ++i) grad += u.values[static_cast<std::size_t>(t[i])] * g.grad[i].spatial();
            const double n = nu(materials_.model(mesh_.region[e]), norm(grad));
            if (!std::isfinite(n)) throw SolverError("residual: non-finite reluctivity in element " + std::to_string(e));
            const double s = sigma(e);
            for (int i = 0; i < 4; ++i) r[i] = g.volume * n * dot(g.grad[i].spatial(), grad);
            if (s != 0.0) {
                const auto m = element_matrices(p, s, Tensor2::scalar(0.0), velocities(e, p, s));
                for (int i = 0; i < 4; ++i) {
                    for (int j = 0; j < 4; ++j) r[i] += m.C[i * 4 + j] * u.values[static_cast<std::size_t>(t[j])];
                }
            }
        });
        for (std::size_t d = 0; d < res.size(); ++d) res[d] -= load[d];
        return res;
    }

    /// Newton matrix at u: tangent reluctivity tensor from each element's constant gradient.
    CsrMatrix jacobian(const SolutionField& u) const
    {
        check_field(u);
        return gather([&](std::size_t e, Mat4& ae, std::array<double, 4>& fe) {
            // d/dg [nu(|g|) g] has the same form as the tangent in B since |g| = |B|.
            const Tensor2 tt = tangent_tensor(materials_.model(mesh_.region[e]), u.spatial_gradient(e));
            if (!std::isfinite(tt.xx) || !std::isfinite(tt.xy) || !std::isfinite(tt.yy)) {
                throw SolverError("jacobian: non-finite tangent in element " + std::to_string(e));
            }
            const auto m = element(e, tt);
            for (int k = 0; k < 16; ++k) ae[k] = m.K[k] + m.C[k];
            fe = {};
        }).A;
    }

    SolutionField field(std::span<const double> x) const { return {&mesh_, dofs_.to_full(x)}; }

    ElementMatrices element(std::size_t e, const Tensor2& nu_tensor) const
    {
        const auto p = tet_points(mesh_, e);
        const double s = sigma(e);
        return element_matrices(p, s, nu_tensor, velocities(e, p, s));
    }

private:
    std::array<Vec2, 4> velocities(std::size_t, const std::array<Vec3, 4>& p, double s) const
    {
        if (s == 0.0 || geom_.alpha == 0.0) return {};
        return velocity_quadrature(p, geom_);
    }

    static double combine(const ElementMatrices& m, int k, FormPart part)
    {
        switch (part) {
        case FormPart::Stiffness: return m.K[k];
        case FormPart::Convection: return m.C[k];
        case FormPart::Full: break;
        }
        return m.K[k] + m.C[k];
    }

    std::array<double, 4> element_load(std::size_t e, double nu_e, const LoadTerms& load,
                                       const std::vector<TetQuadPoint>& rule) const
    {
        std::array<double, 4> f{};
        if (load.empty()) return f;
        const auto p = tet_points(mesh_, e);
        const auto g = tet_geometry(p);
        const RegionId r = mesh_.region[e];
        for (const auto& q : rule) {
            Vec3 x{};
            for (int k = 0; k < 4; ++k) x += q.bary[k] * p[k];
            const double w = q.weight * g.volume;
            const double j = load.current ? load.current(x.spatial(), x.t, r) : 0.0;
            const Vec2 m = load.magnetization_perp ? load.magnetization_perp(x.spatial(), x.t, r) : Vec2{};
            for (int i = 0; i < 4; ++i) f[i] += w * (j * q.bary[i] + nu_e * dot(m, g.grad[i].spatial()));
        }
        return f;
    }

    void check_field(const SolutionField& u) const
    {
        if (u.values.size() != mesh_.nodes.size()) throw Error("solution field does not match the mesh");
    }

    static void check_finite(std::span<const double> a, const char* what)
    {
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (!std::isfinite(a[i]) || !(a[i] > 0.0)) {
                throw SolverError(std::string("non-finite or non-positive ") + what + " in element " + std::to_string(i));
            }
        }
    }

    /// Per dof row: the (element, local vertex) pairs that feed it, in element order, and
    /// the CSR slot of every element matrix entry.
    void build_plan()
    {
        const std::size_t n = dofs_.n_free;
        const std::size_t ne = mesh_.tets.size();
        contrib_ptr_.assign(n + 1, 0);
        for (const auto& t : mesh_.tets) {
            for (int v : t) {
                if (dofs_.dof[v] >= 0) ++contrib_ptr_[static_cast<std::size_t>(dofs_.dof[v]) + 1];
            }
        }
        for (std::size_t d = 0; d < n; ++d) contrib_ptr_[d + 1] += contrib_ptr_[d];
        contrib_.resize(contrib_ptr_[n]);
        {
            std::vector<std::size_t> next(contrib_ptr_.begin(), contrib_ptr_.end() - 1);
            for (std::size_t e = 0; e < ne; ++e) {
                for (int i = 0; i < 4; ++i) {
                    const auto d = dofs_.dof[mesh_.tets[e][i]];
                    if (d >= 0) contrib_[next[static_cast<std::size_t>(d)]++] = e * 4 + static_cast<std::size_t>(i);
                }
            }
        }

        std::vector<std::vector<std::int32_t>> cols(n);
        parallel_for(n, workers_, [&](std::size_t b, std::size_t end) {
            for (std::size_t d = b; d < end; ++d) {
                auto& c = cols[d];
                for (std::size_t q = contrib_ptr_[d]; q < contrib_ptr_[d + 1]; ++q) {
                    for (int v : mesh_.tets[contrib_[q] / 4]) {
                        if (dofs_.dof[v] >= 0) c.push_back(dofs_.dof[v]);
                    }
                }
                std::sort(c.begin(), c.end());
                c.erase(std::unique(c.begin(), c.end()), c.end());
            }
        });
        pattern_.rows = pattern_.cols = n;
        pattern_.row_ptr.assign(n + 1, 0);
        for (std::size_t d = 0; d < n; ++d) pattern_.row_ptr[d + 1] = pattern_.row_ptr[d] + cols[d].size();
        pattern_.col.resize(pattern_.row_ptr[n]);
        for (std::size_t d = 0; d < n; ++d) std::copy(cols[d].begin(), cols[d].end(), pattern_.col.begin() + static_cast<std::ptrdiff_t>(pattern_.row_ptr[d]));
        pattern_.val.assign(pattern_.col.size(), 0.0);

        chunk_rows_.assign((ne + chunk_ - 1) / chunk_, {});
        for (std::size_t d = 0; d < n; ++d) {
            for (std::size_t q = contrib_ptr_[d]; q < contrib_ptr_[d + 1];) {
                const std::size_t c = contrib_[q] / 4 / chunk_;
                std::size_t q1 = q;
                while (q1 < contrib_ptr_[d + 1] && contrib_[q1] / 4 / chunk_ == c) ++q1;
                chunk_rows_[c].push_back({d, q, q1});
                q = q1;
            }
        }

        slot_.assign(ne * 16, -1);
        parallel_for(n, workers_, [&](std::size_t b, std::size_t end) {
            for (std::size_t d = b; d < end; ++d) {
                for (std::size_t q = contrib_ptr_[d]; q < contrib_ptr_[d + 1]; ++q) {
                    const std::size_t e = contrib_[q] / 4, i = contrib_[q] % 4;
                    for (std::size_t j = 0; j < 4; ++j) {
                        const auto c = dofs_.dof[mesh_.tets[e][j]];
                        if (c >= 0) slot_[e * 16 + i * 4 + j] = pattern_.find(d, static_cast<std::size_t>(c));
                    }
                }
            }
        });
    }

    /// Element kernels run on blocks of chunk_ elements; each row then adds the block's
    /// contributions in element order, so sums do not depend on the worker count.
    template <class ElementFn>
    LinearSystem gather(ElementFn&& element_fn) const
    {
        LinearSystem sys;
        sys.dofs = &dofs_;
        sys.A = pattern_;
        sys.rhs.assign(dofs_.n_free, 0.0);
        std::vector<Mat4> ae(chunk_);
        std::vector<std::array<double, 4>> fe(chunk_);
        for (std::size_t c = 0; c < chunk_rows_.size(); ++c) {
            const std::size_t e0 = c * chunk_, e1 = std::min(mesh_.tets.size(), e0 + chunk_);
            parallel_for(e1 - e0, workers_, [&](std::size_t b, std::size_t end) {
                for (std::size_t k = b; k < end; ++k) element_fn(e0 + k, ae[k], fe[k]);
            });
            const auto& rows = chunk_rows_[c];
            parallel_for(rows.size(), workers_, [&](std::size_t b, std::size_t end) {
                for (std::size_t r = b; r < end; ++r) {
                    const auto& span = rows[r];
                    double f = sys.rhs[span.row];
                    for (std::size_t q = span.begin; q < span.end; ++q) {
                        const std::size_t e = contrib_[q] / 4, i = contrib_[q] % 4;
                        const auto& a = ae[e - e0];
                        f += fe[e - e0][i];
                        for (std::size_t j = 0; j < 4; ++j) {
                            const auto s = slot_[e * 16 + i * 4 + j];
                            if (s >= 0) {
                                sys.A.val[static_cast<std::size_t>(s)] += a[i * 4 + j];
                            } else {
                                f -= a[i * 4 + j] * dofs_.fixed[static_cast<std::size_t>(mesh_.tets[e][j])];
                            }
                        }
                    }
                    sys.rhs[span.row] = f;
                }
            });
        }
        return sys;
    }

    template <class ElementFn>
    std::vector<double> gather_vector(ElementFn&& element_fn) const
    {
        std::vector<double> out(dofs_.n_free, 0.0);
        std::vector<std::array<double, 4>> fe(chunk_);
        for (std::size_t c = 0; c < chunk_rows_.size(); ++c) {
            const std::size_t e0 = c * chunk_, e1 = std::min(mesh_.tets.size(), e0 + chunk_);
            parallel_for(e1 - e0, workers_, [&](std::size_t b, std::size_t end) {
                for (std::size_t k = b; k < end; ++k) element_fn(e0 + k, fe[k]);
            });
            const auto& rows = chunk_rows_[c];
            parallel_for(rows.size(), workers_, [&](std::size_t b, std::size_t end) {
                for (std::size_t r = b; r < end; ++r) {
                    const auto& span = rows[r];
                    double f = out[span.row];
                    for (std::size_t q = span.begin; q < span.end; ++q) f += fe[contrib_[q] / 4 - e0][contrib_[q] % 4];
                    out[span.row] = f;
                }
            });
        }
        return out;
    }

    struct RowSpan {
        std::size_t row, begin, end;  ///< contrib_ range of one row inside one element block
    };

    static constexpr std::size_t chunk_ = 4096;

    const SpaceTimeMesh& mesh_;
    MotorGeometry geom_;
    const MaterialTable& materials_;
    const DofMap& dofs_;
    int workers_ = 1;
    std::vector<std::size_t> contrib_ptr_;
    std::vector<std::size_t> contrib_;
    CsrMatrix pattern_;
    std::vector<std::ptrdiff_t> slot_;
    std::vector<std::vector<RowSpan>> chunk_rows_;
};

/// One-shot assembly with the materials' linear reluctivity.
inline LinearSystem assemble(const SpaceTimeMesh& mesh, const MotorGeometry& geom, const MaterialTable& materials,
                             const DofMap& dofs, std::span<const double> nu_e, const LoadTerms& load)
{
    Assembler a(mesh, geom, materials, dofs);
    auto sys = a.assemble(nu_e, load);
    sys.dofs = &dofs;
    return sys;
}

}  // namespace rotostep
