#pragma once

// Linear solvers (sparse LU, restarted GMRES with Jacobi / ILU(0)) and the damped Newton
// driver for the saturating problem.

#include "rotostep/assembly.hpp"
#include "rotostep/errors.hpp"
#include "rotostep/parallel.hpp"
#include "rotostep/sparse.hpp"

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace rotostep {

enum class LinearMethod { Direct, Gmres };
enum class PreconditionerKind { None, Jacobi, Ilu0 };

struct SolverConfig {
    LinearMethod method = LinearMethod::Direct;
    int restart = 50;
    int max_iterations = 250;
    double rtol = 1e-8;
    PreconditionerKind preconditioner = PreconditionerKind::Ilu0;
    bool budget_mode = false;  ///< a spent iteration budget is not treated as failure
    int workers = default_workers();

    void validate() const
    {
        if (restart < 1) throw ConfigError("solver: restart must be at least 1");
        if (max_iterations < 1) throw ConfigError("solver: max_iterations must be at least 1");
        if (restart > max_iterations) throw ConfigError("solver: restart must not exceed max_iterations");
        if (!(rtol > 0.0 && rtol < 1.0)) throw ConfigError("solver: rtol must lie in (0, 1)");
    }
};

enum class SolveStatus { Converged, IterationCap, DampingFloor };

inline const char* status_name(SolveStatus s)
{
    switch (s) {
    case SolveStatus::Converged: return "converged";
    case SolveStatus::IterationCap: return "iteration_cap";
    case SolveStatus::DampingFloor: return "damping_floor";
    }
    return "unknown";
}

struct SolveReport {
    int iterations = 0;
    double final_residual = 0.0;  ///< relative
    std::vector<double> history;  ///< relative residual after every iteration, initial value first
    std::vector<double> times;    ///< seconds since start, aligned with history
    std::vector<double> steps;    ///< Newton step lengths (Newton only)
    std::vector<int> linear_iterations;  ///< inner iterations per Newton step (Newton only)
    double wall_time = 0.0;
    SolveStatus status = SolveStatus::Converged;

    bool converged() const { return status == SolveStatus::Converged; }
};

class Stopwatch {
public:
    double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

inline Eigen::SparseMatrix<double> to_eigen(const CsrMatrix& a)
{
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(a.nnz());
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t p = a.row_ptr[i]; p < a.row_ptr[i + 1]; ++p) {
            t.emplace_back(static_cast<int>(i), a.col[p], a.val[p]);
        }
    }
    Eigen::SparseMatrix<double> m(static_cast<Eigen::Index>(a.rows), static_cast<Eigen::Index>(a.cols));
    m.setFromTriplets(t.begin(), t.end());
    return m;
}

/// Sparse LU factorization, reusable for many right-hand sides.
class DirectSolver {
public:
    explicit DirectSolver(const CsrMatrix& a)
    {
        if (a.rows != a.cols) throw SolverError("direct solver: matrix is not square");
        if (a.rows == 0) throw SolverError("direct solver: empty system");
        m_ = to_eigen(a);
        lu_.analyzePattern(m_);
        lu_.factorize(m_);
        if (lu_.info() != Eigen::Success) throw SolverError("direct solver: factorization failed (singular matrix?)");
    }

    std::vector<double> solve(std::span<const double> b) const
    {
        Eigen::Map<const Eigen::VectorXd> rhs(b.data(), static_cast<Eigen::Index>(b.size()));
        Eigen::VectorXd x = lu_.solve(rhs);
        if (!x.allFinite()) throw SolverError("direct solver: non-finite solution");
        return {x.data(), x.data() + x.size()};
    }

private:
    Eigen::SparseMatrix<double> m_;
    mutable Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu_;
};

class Preconditioner {
public:
    virtual ~Preconditioner() = default;
    virtual void apply(std::span<const double> in, std::span<double> out) const = 0;
};

class IdentityPreconditioner final : public Preconditioner {
public:
    void apply(std::span<const double> in, std::span<double> out) const override { std::copy(in.begin(), in.end(), out.begin()); }
};

class JacobiPreconditioner final : public Preconditioner {
public:
    explicit JacobiPreconditioner(const CsrMatrix& a)
    {
        inv_ = a.diagonal();
        for (std::size_t i = 0; i < inv_.size(); ++i) {
            if (inv_[i] == 0.0) throw SolverError("jacobi: zero diagonal in row " + std::to_string(i));
            inv_[i] = 1.0 / inv_[i];
        }
    }

    void apply(std::span<const double> in, std::span<double> out) const override
    {
        for (std::size_t i = 0; i < inv_.size(); ++i) out[i] = inv_[i] * in[i];
    }

private:
    std::vector<double> inv_;
};

/// Incomplete LU with the sparsity of the operator: unit lower L and upper U stored in one CSR.
class Ilu0Preconditioner final : public Preconditioner {
public:
    explicit Ilu0Preconditioner(const CsrMatrix& a) : lu_(a)
    {
        if (a.rows != a.cols) throw SolverError("ilu0: matrix is not square");
        const std::size_t n = a.rows;
        diag_.assign(n, 0);
        std::vector<std::ptrdiff_t> where(n, -1);
        for (std::size_t i = 0; i < n; ++i) {
            const auto d = lu_.find(i, i);
            if (d < 0) throw SolverError("ilu0: missing diagonal in row " + std::to_string(i));
            diag_[i] = static_cast<std::size_t>(d);
        }
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t p = lu_.row_ptr[i]; p < lu_.row_ptr[i + 1]; ++p) where[static_cast<std::size_t>(lu_.col[p])] = static_cast<std::ptrdiff_t>(p);
            for (std::size_t p = lu_.row_ptr[i]; p < lu_.row_ptr[i + 1]; ++p) {
                const auto k = static_cast<std::size_t>(lu_.col[p]);
                if (k >= i) break;
                const double pivot = lu_.val[diag_[k]];
                if (pivot == 0.0) throw SolverError("ilu0: zero pivot in row " + std::to_string(k));
                lu_.val[p] /= pivot;
                const double lik = lu_.val[p];
                for (std::size_t q = diag_[k] + 1; q < lu_.row_ptr[k + 1]; ++q) {
                    const auto w = where[static_cast<std::size_t>(lu_.col[q])];
                    if (w >= 0) lu_.val[static_cast<std::size_t>(w)] -= lik * lu_.val[q];
                }
            }
            for (std::size_t p = lu_.row_ptr[i]; p < lu_.row_ptr[i + 1]; ++p) where[static_cast<std::size_t>(lu_.col[p])] = -1;
            if (lu_.val[diag_[i]] == 0.0) throw SolverError("ilu0: zero pivot in row " + std::to_string(i));
        }
    }

    void apply(std::span<const double> in, std::span<double> out) const override
    {
        const std::size_t n = lu_.rows;
        for (std::size_t i = 0; i < n; ++i) {
            double s = in[i];
            for (std::size_t p = lu_.row_ptr[i]; p < diag_[i]; ++p) s -= lu_.val[p] * out[static_cast<std::size_t>(lu_.col[p])];
            out[i] = s;
        }
        for (std::size_t i = n; i-- > 0;) {
            double s = out[i];
            for (std::size_t p = diag_[i] + 1; p < lu_.row_ptr[i + 1]; ++p) s -= lu_.val[p] * out[static_cast<std::size_t>(lu_.col[p])];
            out[i] = s / lu_.val[diag_[i]];
        }
    }

    const CsrMatrix& factors() const { return lu_; }

private:
    CsrMatrix lu_;
    std::vector<std::size_t> diag_;
};

inline Ilu0Preconditioner ilu0_factor(const CsrMatrix& a) { return Ilu0Preconditioner(a); }

inline std::unique_ptr<Preconditioner> make_preconditioner(const CsrMatrix& a, PreconditionerKind kind)
{
    switch (kind) {
    case PreconditionerKind::Jacobi: return std::make_unique<JacobiPreconditioner>(a);
    case PreconditionerKind::Ilu0: return std::make_unique<Ilu0Preconditioner>(a);
    case PreconditionerKind::None: break;
    }
    return std::make_unique<IdentityPreconditioner>();
}

/// Right-preconditioned restarted GMRES (modified Gram-Schmidt, Givens rotations). The
/// history holds the relative residual of the least-squares problem, which cannot grow
/// within a restart cycle.
inline SolveReport gmres(const CsrMatrix& a, std::span<const double> b, std::span<double> x, const SolverConfig& cfg,
                         const Preconditioner& m)
{
    cfg.validate();
    const std::size_t n = a.rows;
    if (a.cols != n || b.size() != n || x.size() != n) throw SolverError("gmres: size mismatch");
    Stopwatch clock;
    SolveReport rep;
    const double bnorm = norm2(b);
    if (bnorm == 0.0) {
        std::fill(x.begin(), x.end(), 0.0);
        rep.history = {0.0};
        rep.times = {clock.seconds()};
        rep.wall_time = clock.seconds();
        return rep;
    }
    const int workers = cfg.workers;
    const std::size_t k = static_cast<std::size_t>(cfg.restart);
    std::vector<std::vector<double>> v(k + 1, std::vector<double>(n));
    std::vector<std::vector<double>> h(k + 1, std::vector<double>(k, 0.0));
    std::vector<double> cs(k), sn(k), g(k + 1), w(n), z(n), r(n);

    auto residual = [&] {
        a.multiply(x, r, workers);
        for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - r[i];
        return norm2(r);
    };
    auto fail = [&](const std::string& what) {
        std::string msg = "gmres: " + what + " after " + std::to_string(rep.iterations) + " iterations; history:";
        for (double e : rep.history) msg += " " + std::to_string(e);
        throw SolverError(msg);
    };

    double beta = residual();
    rep.history.push_back(beta / bnorm);
    rep.times.push_back(clock.seconds());
    const double target = cfg.rtol * bnorm;
    while (beta > target && rep.iterations < cfg.max_iterations) {
        for (std::size_t i = 0; i < n; ++i) v[0][i] = r[i] / beta;
        std::fill(g.begin(), g.end(), 0.0);
        g[0] = beta;
        std::size_t j = 0;
        bool happy = false;
        for (; j < k && rep.iterations < cfg.max_iterations; ++j) {
            m.apply(v[j], z);
            a.multiply(z, w, workers);
            for (std::size_t i = 0; i <= j; ++i) {
                h[i][j] = dot(w, v[i]);
                for (std::size_t q = 0; q < n; ++q) w[q] -= h[i][j] * v[i][q];
            }
            h[j + 1][j] = norm2(w);
            for (std::size_t i = 0; i < j; ++i) {
                const double t = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            const double hjj = h[j][j], hj1 = h[j + 1][j];
            const double den = std::hypot(hjj, hj1);
            if (!std::isfinite(den)) fail("non-finite Hessenberg entry");
            if (den == 0.0) fail("breakdown (zero Krylov column)");
            const double lucky = hj1;
            cs[j] = hjj / den;
            sn[j] = hj1 / den;
            h[j][j] = den;
            h[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] = cs[j] * g[j];
            ++rep.iterations;
            rep.history.push_back(std::abs(g[j + 1]) / bnorm);
            rep.times.push_back(clock.seconds());
            if (lucky == 0.0) {
                happy = true;
                ++j;
                break;
            }
            for (std::size_t q = 0; q < n; ++q) v[j + 1][q] = w[q] / lucky;
            if (std::abs(g[j + 1]) <= target) {
                ++j;
                break;
            }
        }
        // Back substitution for the cycle's coefficients, then x += M^-1 V y.
        std::vector<double> y(j, 0.0);
        for (std::size_t i = j; i-- > 0;) {
            double s = g[i];
            for (std::size_t c = i + 1; c < j; ++c) s -= h[i][c] * y[c];
            y[i] = s / h[i][i];
        }
        std::fill(w.begin(), w.end(), 0.0);
        for (std::size_t i = 0; i < j; ++i) {
            for (std::size_t q = 0; q < n; ++q) w[q] += y[i] * v[i][q];
        }
        m.apply(w, z);
        for (std::size_t q = 0; q < n; ++q) x[q] += z[q];
        beta = residual();
        if (!std::isfinite(beta)) fail("non-finite residual");
        if (happy) break;
    }
    rep.final_residual = beta / bnorm;
    rep.status = beta <= target ? SolveStatus::Converged : SolveStatus::IterationCap;
    rep.wall_time = clock.seconds();
    return rep;
}

struct LinearResult {
    std::vector<double> x;
    SolveReport report;
};

inline LinearResult solve_linear(const CsrMatrix& a, std::span<const double> b, const SolverConfig& cfg,
                                 std::span<const double> x0 = {})
{
    cfg.validate();
    if (a.rows == 0) throw SolverError("solve_linear: empty system");
    if (b.size() != a.rows) throw SolverError("solve_linear: right-hand side has the wrong size");
    LinearResult out;
    if (cfg.method == LinearMethod::Direct) {
        Stopwatch clock;
        const double bnorm = norm2(b);
        out.x = DirectSolver(a).solve(b);
        const auto ax = a * out.x;
        double rn = 0.0;
        for (std::size_t i = 0; i < ax.size(); ++i) rn += (b[i] - ax[i]) * (b[i] - ax[i]);
        out.report.iterations = 1;
        out.report.final_residual = bnorm > 0.0 ? std::sqrt(rn) / bnorm : 0.0;
        out.report.history = {1.0, out.report.final_residual};
        out.report.wall_time = clock.seconds();
        out.report.times = {0.0, out.report.wall_time};
        return out;
    }
    out.x.assign(a.rows, 0.0);
    if (!x0.empty()) std::copy(x0.begin(), x0.end(), out.x.begin());
    const auto pre = make_preconditioner(a, cfg.preconditioner);
    out.report = gmres(a, b, out.x, cfg, *pre);
    return out;
}

inline LinearResult solve_linear(const LinearSystem& sys, const SolverConfig& cfg) { return solve_linear(sys.A, sys.rhs, cfg); }

struct NewtonConfig {
    int max_newton = 100;
    double abs_tol = 0.0;
    double rel_tol = 1e-8;
    double min_step = 1.0 / 1024.0;
    SolverConfig linear{};

    void validate() const
    {
        if (max_newton < 1) throw ConfigError("newton: max_newton must be at least 1");
        if (!(abs_tol >= 0.0) || !(rel_tol > 0.0)) throw ConfigError("newton: tolerances must be positive");
        if (!(min_step > 0.0 && min_step <= 1.0)) throw ConfigError("newton: min_step must lie in (0, 1]");
        linear.validate();
    }
};

/// Residual and Jacobian of a nonlinear system over free unknowns.
struct NonlinearProvider {
    std::function<std::vector<double>(std::span<const double>)> residual;
    std::function<CsrMatrix(std::span<const double>)> jacobian;
};

/// Raised when the damped step falls below the minimum length without reducing the residual.
class DampingFloorError : public SolverError {
public:
    DampingFloorError(const std::string& what, SolveReport rep) : SolverError(what), report(std::move(rep)) {}
    SolveReport report;
};

/// Damped Newton: the step is halved until the residual norm decreases. Stops when
/// ||r|| <= abs_tol or ||r|| <= rel_tol ||r(x0)||; history entries are relative to ||r(x0)||.
inline LinearResult newton_solve(const NonlinearProvider& p, const NewtonConfig& cfg, std::vector<double> x)
{
    cfg.validate();
    Stopwatch clock;
    LinearResult out;
    auto& rep = out.report;
    auto r = p.residual(x);
    const double r0 = norm2(r);
    double rn = r0;
    auto rel = [&](double v) { return r0 > 0.0 ? v / r0 : 0.0; };
    rep.history.push_back(rel(rn));
    rep.times.push_back(clock.seconds());
    auto done = [&] { return rn <= cfg.abs_tol || rn <= cfg.rel_tol * r0; };
    while (!done() && rep.iterations < cfg.max_newton) {
        const auto jac = p.jacobian(x);
        std::vector<double> neg(r.size());
        for (std::size_t i = 0; i < r.size(); ++i) neg[i] = -r[i];
        const auto lin = solve_linear(jac, neg, cfg.linear);
        rep.linear_iterations.push_back(lin.report.iterations);
        double step = 1.0;
        std::vector<double> trial(x.size());
        for (;;) {
            for (std::size_t i = 0; i < x.size(); ++i) trial[i] = x[i] + step * lin.x[i];
            std::vector<double> rt;
            double tn = std::numeric_limits<double>::infinity();
            try {
                rt = p.residual(trial);
                tn = norm2(rt);
            } catch (const SolverError&) {
                // overflowing material law: reject the trial like a residual increase
            }
            if (std::isfinite(tn) && tn < rn) {
                x.swap(trial);
                r.swap(rt);
                rn = tn;
                break;
            }
            step *= 0.5;
            if (step < cfg.min_step) {
                rep.status = SolveStatus::DampingFloor;
                rep.final_residual = rel(rn);
                rep.wall_time = clock.seconds();
                out.x = x;
                throw DampingFloorError("newton: damping floor reached at iteration " + std::to_string(rep.iterations + 1) +
                                            " with relative residual " + std::to_string(rel(rn)),
                                        rep);
            }
        }
        ++rep.iterations;
        rep.steps.push_back(step);
        rep.history.push_back(rel(rn));
        rep.times.push_back(clock.seconds());
    }
    rep.final_residual = rel(rn);
    rep.status = done() ? SolveStatus::Converged : SolveStatus::IterationCap;
    rep.wall_time = clock.seconds();
    out.x = std::move(x);
    return out;
}

/// Newton provider for the assembled space-time problem with load vector f.
inline NonlinearProvider make_provider(const Assembler& a, std::vector<double> load)
{
    auto f = std::make_shared<std::vector<double>>(std::move(load));
    return {[&a, f](std::span<const double> x) { return a.residual(a.field(x), *f); },
            [&a](std::span<const double> x) { return a.jacobian(a.field(x)); }};
}

/// Linear solve with every nonlinear reluctivity replaced by the constant nu1; used as
/// the Newton initial guess.
inline LinearResult linear_bootstrap(const SpaceTimeMesh& mesh, const MotorGeometry& geom, const MaterialTable& materials,
                                     const DofMap& dofs, const LoadTerms& load, const SolverConfig& cfg,
                                     double nu1 = nu_iron_linear)
{
    const MaterialTable lin = materials.linearized(nu1);
    Assembler a(mesh, geom, lin, dofs, cfg.workers);
    const auto sys = a.assemble(a.linear_nu_field(), load);
    return solve_linear(sys, cfg);
}

}  // namespace rotostep
