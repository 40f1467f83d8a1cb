#pragma once

// Conductivity and reluctivity per region, saturating reluctivity models with their
// Newton tangents, and the impressed coil current / magnet magnetization sources.

#include "rotostep/errors.hpp"
#include "rotostep/geometry.hpp"
#include "rotostep/vec.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <istream>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

namespace rotostep {

inline constexpr double nu_vacuum = 1e7 / (4.0 * std::numbers::pi);
inline constexpr double nu_magnet_default = 1e7 / (4.2 * std::numbers::pi);
/// Linear iron reluctivity used as the unsaturated approximation.
inline constexpr double nu_iron_linear = 1e7 / (5100.0 * 4.0 * std::numbers::pi);

struct ConstantReluctivity {
    double nu = nu_vacuum;
};

/// nu(b) = k1 + k2 * exp(k3 * b^2).
struct BrauerReluctivity {
    double k1 = 150.0;
    double k2 = nu_iron_linear - 150.0;
    double k3 = 1.8;
};

/// Monotone cubic Hermite interpolation of H(B) through measured points. Beyond the last
/// point H grows linearly with slope nu_vacuum.
class SplineReluctivity {
public:
    SplineReluctivity() = default;

    /// Points as (B, H) pairs; (0, 0) is prepended when missing. B must be strictly increasing.
    explicit SplineReluctivity(std::vector<std::array<double, 2>> bh)
    {
        if (bh.empty() || bh.front()[0] != 0.0) bh.insert(bh.begin(), {0.0, 0.0});
        if (bh.size() < 2) throw ConfigError("BH curve needs at least one point besides the origin");
        if (bh.front()[1] != 0.0) throw ConfigError("BH curve must pass through H = 0 at B = 0");
        for (std::size_t i = 1; i < bh.size(); ++i) {
            if (!(bh[i][0] > bh[i - 1][0])) throw ConfigError("BH curve: B values must be strictly increasing");
        }
        const std::size_t n = bh.size();
        b_.resize(n);
        h_.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            b_[i] = bh[i][0];
            h_[i] = bh[i][1];
        }
        std::vector<double> secant(n - 1);
        for (std::size_t i = 0; i + 1 < n; ++i) secant[i] = (h_[i + 1] - h_[i]) / (b_[i + 1] - b_[i]);

        // Fritsch-Carlson slopes, with the end slope matching the linear extrapolation.
        m_.assign(n, 0.0);
        m_[0] = secant[0];
        for (std::size_t i = 1; i + 1 < n; ++i) {
            m_[i] = (secant[i - 1] * secant[i] <= 0.0) ? 0.0 : 0.5 * (secant[i - 1] + secant[i]);
        }
        m_[n - 1] = nu_vacuum;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            if (secant[i] == 0.0) {
                m_[i] = m_[i + 1] = 0.0;
                continue;
            }
            const double a = m_[i] / secant[i];
            const double b = m_[i + 1] / secant[i];
            if (a < 0.0) m_[i] = 0.0;
            if (b < 0.0) m_[i + 1] = 0.0;
            const double s = a * a + b * b;
            if (s > 9.0) {
                const double tau = 3.0 / std::sqrt(s);
                m_[i] = tau * a * secant[i];
                m_[i + 1] = tau * b * secant[i];
            }
        }
    }

    /// H(b) and dH/db.
    std::array<double, 2> field(double b) const
    {
        const std::size_t n = b_.size();
        if (b >= b_[n - 1]) return {h_[n - 1] + nu_vacuum * (b - b_[n - 1]), nu_vacuum};
        const std::size_t i = interval(b);
        const double dx = b_[i + 1] - b_[i];
        const double s = (b - b_[i]) / dx;
        const double h00 = (1 + 2 * s) * (1 - s) * (1 - s), h10 = s * (1 - s) * (1 - s);
        const double h01 = s * s * (3 - 2 * s), h11 = s * s * (s - 1);
        const double d00 = 6 * s * s - 6 * s, d10 = 3 * s * s - 4 * s + 1;
        const double d01 = 6 * s - 6 * s * s, d11 = 3 * s * s - 2 * s;
        const double H = h00 * h_[i] + h10 * dx * m_[i] + h01 * h_[i + 1] + h11 * dx * m_[i + 1];
        const double dH = (d00 * h_[i] + d01 * h_[i + 1]) / dx + d10 * m_[i] + d11 * m_[i + 1];
        return {H, dH};
    }

    /// nu(b) = H(b)/b and its derivative. On the first interval H is a cubic through the
    /// origin, so nu is evaluated from its polynomial coefficients without dividing by b.
    std::array<double, 2> nu_and_derivative(double b) const
    {
        if (b < b_[1]) {
            const double dx = b_[1];
            const double m0 = m_[0], m1 = m_[1], h1 = h_[1];
            // H(b) = c1 b + c2 b^2 + c3 b^3 on [0, b_1].
            const double c1 = m0;
            const double c2 = (3.0 * h1 / dx - 2.0 * m0 - m1) / dx;
            const double c3 = (m0 + m1 - 2.0 * h1 / dx) / (dx * dx);
            return {c1 + c2 * b + c3 * b * b, c2 + 2.0 * c3 * b};
        }
        const auto [H, dH] = field(b);
        return {H / b, (dH * b - H) / (b * b)};
    }

    const std::vector<double>& b_points() const { return b_; }
    const std::vector<double>& h_points() const { return h_; }

private:
    std::size_t interval(double b) const
    {
        auto it = std::upper_bound(b_.begin(), b_.end(), b);
        return static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, (it - b_.begin()) - 1));
    }

    std::vector<double> b_{0.0, 1.0};
    std::vector<double> h_{0.0, nu_vacuum};
    std::vector<double> m_{nu_vacuum, nu_vacuum};
};

/// Two-column CSV "B,H" with a header line; SI units.
inline SplineReluctivity read_bh_csv(std::istream& in)
{
    std::string line;
    if (!std::getline(in, line)) throw ParseError("BH csv: missing header line");
    std::vector<std::array<double, 2>> pts;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ss(line);
        double b = 0.0, h = 0.0;
        std::string extra;
        if (!(ss >> b >> h) || (ss >> extra)) throw ParseError("BH csv line " + std::to_string(lineno) + ": expected two numbers");
        pts.push_back({b, h});
    }
    if (pts.empty()) throw ParseError("BH csv: no data rows");
    return SplineReluctivity(std::move(pts));
}

using ReluctivityModel = std::variant<ConstantReluctivity, BrauerReluctivity, SplineReluctivity>;

/// nu(b) and d nu / db for |B| = b >= 0.
inline std::array<double, 2> nu_and_derivative(const ReluctivityModel& model, double b)
{
    return std::visit(
        [b](const auto& m) -> std::array<double, 2> {
            using M = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<M, ConstantReluctivity>) {
                return {m.nu, 0.0};
            } else if constexpr (std::is_same_v<M, BrauerReluctivity>) {
                const double e = m.k2 * std::exp(m.k3 * b * b);
                return {m.k1 + e, 2.0 * m.k3 * b * e};
            } else {
                return m.nu_and_derivative(b);
            }
        },
        model);
}

inline double nu(const ReluctivityModel& model, double b) { return nu_and_derivative(model, b)[0]; }

inline bool is_linear(const ReluctivityModel& model) { return std::holds_alternative<ConstantReluctivity>(model); }

/// Symmetric 2x2 tensor stored as {xx, xy, yy}.
struct Tensor2 {
    double xx = 0.0;
    double xy = 0.0;
    double yy = 0.0;

    static constexpr Tensor2 scalar(double s) { return {s, 0.0, s}; }
    constexpr Vec2 apply(const Vec2& v) const { return {xx * v.x + xy * v.y, xy * v.x + yy * v.y}; }
};

/// Derivative of B -> nu(|B|) B: nu I + nu'(|B|)/|B| B B^T.
inline Tensor2 tangent_tensor(const ReluctivityModel& model, const Vec2& B)
{
    const double b = norm(B);
    if (b < 1e-12) return Tensor2::scalar(nu(model, 0.0));
    const auto [n, dn] = nu_and_derivative(model, b);
    const double c = dn / b;
    return {n + c * B.x * B.x, c * B.x * B.y, n + c * B.y * B.y};
}

struct MonotonicityEstimate {
    double lipschitz_est = 0.0;
    double monotonicity_est = 0.0;
    bool violated = false;
};

/// Secant bounds of b -> nu(b) b sampled on [0, b_max].
inline MonotonicityEstimate validate_monotonicity(const ReluctivityModel& model, double b_max, int n_samples)
{
    if (n_samples < 1 || !(b_max > 0.0)) throw ConfigError("validate_monotonicity: need b_max > 0 and n_samples >= 1");
    MonotonicityEstimate est;
    est.lipschitz_est = -std::numeric_limits<double>::infinity();
    est.monotonicity_est = std::numeric_limits<double>::infinity();
    auto g = [&](double b) { return nu(model, b) * b; };
    double b_prev = 0.0, g_prev = g(0.0);
    for (int i = 1; i <= n_samples; ++i) {
        const double b = b_max * i / n_samples;
        const double gb = g(b);
        const double s = (gb - g_prev) / (b - b_prev);
        est.lipschitz_est = std::max(est.lipschitz_est, s);
        est.monotonicity_est = std::min(est.monotonicity_est, s);
        b_prev = b;
        g_prev = gb;
    }
    est.violated = !(est.monotonicity_est > 0.0);
    return est;
}

struct RegionMaterial {
    double sigma = 0.0;
    ReluctivityModel model = ConstantReluctivity{};
};

/// Material per region kind; all magnets share one entry, all coils another.
class MaterialTable {
public:
    /// Table-1 coefficients with a nonlinear iron model.
    static MaterialTable motor_default(ReluctivityModel iron = BrauerReluctivity{})
    {
        MaterialTable t;
        t.set(RegionKind::RotorIron, {0.0, iron});
        t.set(RegionKind::StatorIron, {0.0, iron});
        t.set(RegionKind::AirGap, {0.0, ConstantReluctivity{nu_vacuum}});
        t.set(RegionKind::RotorAirPocket, {0.0, ConstantReluctivity{nu_vacuum}});
        t.set(RegionKind::Coil, {0.0, ConstantReluctivity{nu_vacuum}});
        t.set(RegionKind::Magnet, {1e6, ConstantReluctivity{nu_magnet_default}});
        return t;
    }

    /// Same sigma and constant nu in every region.
    static MaterialTable uniform(double nu_value, double sigma_magnet)
    {
        MaterialTable t;
        for (auto k : all_kinds()) t.set(k, {0.0, ConstantReluctivity{nu_value}});
        t.set(RegionKind::Magnet, {sigma_magnet, ConstantReluctivity{nu_value}});
        return t;
    }

    void set(RegionKind kind, RegionMaterial m)
    {
        if (!(m.sigma >= 0.0)) throw ConfigError("material sigma must be non-negative");
        entries_[static_cast<std::size_t>(kind)] = std::move(m);
    }

    const RegionMaterial& operator[](RegionId r) const { return entries_[static_cast<std::size_t>(r.kind)]; }
    double sigma(RegionId r) const { return (*this)[r].sigma; }
    const ReluctivityModel& model(RegionId r) const { return (*this)[r].model; }
    bool conducting(RegionId r) const { return sigma(r) > 0.0; }

    bool all_linear() const
    {
        return std::all_of(entries_.begin(), entries_.end(), [](const auto& e) { return is_linear(e.model); });
    }

    /// Copy with every nonlinear model replaced by a constant reluctivity.
    MaterialTable linearized(double nu_linear = nu_iron_linear) const
    {
        MaterialTable t = *this;
        for (auto& e : t.entries_) {
            if (!is_linear(e.model)) e.model = ConstantReluctivity{nu_linear};
        }
        return t;
    }

    /// Copy with sigma = 0 everywhere.
    MaterialTable without_conductivity() const
    {
        MaterialTable t = *this;
        for (auto& e : t.entries_) e.sigma = 0.0;
        return t;
    }

    static constexpr std::array<RegionKind, 6> all_kinds()
    {
        return {RegionKind::RotorIron, RegionKind::Magnet, RegionKind::RotorAirPocket,
                RegionKind::AirGap, RegionKind::StatorIron, RegionKind::Coil};
    }

private:
    std::array<RegionMaterial, 6> entries_{};
};

/// Three-phase coil currents and permanent-magnet magnetization.
struct SourceModel {
    double amplitude = 1555.0;  ///< peak coil current (A)
    double coil_area = 0.0;     ///< m^2
    double frequency = 0.0;     ///< Hz
    double remanence = 1.216;   ///< B_R (T)
    int n_coils = 48;
    int n_magnets = 16;
    double magnet_pitch = 2.0 * std::numbers::pi / 16;

    /// Nominal annular-sector coil area, frequency (n_magnets/2) x revolutions per second.
    static SourceModel for_geometry(const MotorGeometry& g)
    {
        SourceModel s;
        s.coil_area = 0.5 * g.coil_arc * g.coil_pitch() * (g.coil_r_out * g.coil_r_out - g.coil_r_in * g.coil_r_in);
        s.frequency = 0.5 * g.n_magnets * g.alpha / (2.0 * std::numbers::pi);
        s.n_coils = g.n_coils;
        s.n_magnets = g.n_magnets;
        s.magnet_pitch = g.magnet_pitch();
        return s;
    }

    /// Phase 0 (A), 1 (B) or 2 (C) of coil k and its winding sign. Coils follow the
    /// repeating pattern A+, C-, B+, A-, C+, B-.
    static std::pair<int, int> winding(int k)
    {
        static constexpr std::array<int, 6> phase{0, 2, 1, 0, 2, 1};
        static constexpr std::array<int, 6> sign{1, -1, 1, -1, 1, -1};
        return {phase[k % 6], sign[k % 6]};
    }
};

/// Coil current density at time t; zero outside coils.
inline double impressed_current(const SourceModel& src, RegionId region, double t)
{
    if (region.kind != RegionKind::Coil) return 0.0;
    if (!(src.coil_area > 0.0)) throw ConfigError("impressed_current: coil_area must be positive");
    const auto [phase, sign] = SourceModel::winding(region.index);
    const double shift = -2.0 * std::numbers::pi * phase / 3.0;
    return sign * src.amplitude / src.coil_area * std::sin(2.0 * std::numbers::pi * src.frequency * t + shift);
}

/// M-perp of magnet k in the reference configuration: B_R times the perpendicular of the
/// radial direction at the magnet centre, with alternating polarity.
inline Vec2 magnetization_perp(const SourceModel& src, RegionId region)
{
    if (region.kind != RegionKind::Magnet) return {};
    const double centre = (region.index + 0.5) * src.magnet_pitch;
    const Vec2 d{std::cos(centre), std::sin(centre)};
    const double sign = region.index % 2 == 0 ? 1.0 : -1.0;
    return sign * src.remanence * perp(d);
}

/// M-perp at time t: the magnetization turns with the rotor.
inline Vec2 magnetization_perp(const SourceModel& src, const MotorGeometry& g, RegionId region, double t)
{
    const Vec2 m = magnetization_perp(src, region);
    return region.kind == RegionKind::Magnet ? rotate(m, g.alpha * t) : m;
}

}  // namespace rotostep
