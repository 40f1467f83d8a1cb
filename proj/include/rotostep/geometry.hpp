#pragma once

// Reference motor cross-section, the rotating deformation of the rotor and the
// induced velocity field. Everything here is a pure function of an immutable
// MotorGeometry.

#include "rotostep/errors.hpp"
#include "rotostep/vec.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>

namespace rotostep {

enum class BlendMode {
    Standard,  ///< psi = 1 in the rotor, linear decay across the gap, 0 in the stator
    Rigid,     ///< psi = 1 everywhere: the whole annulus rotates
};

/// Annular motor: rotor (r0, r1), air gap (r1, r2), stator (r2, R).
///
/// Magnets sit in the radial band [magnet_r_in, magnet_r_out] centred in each of the
/// n_magnets angular sectors; coils sit in [coil_r_in, coil_r_out] centred in each of
/// the n_coils stator sectors. Arc fractions are relative to the sector pitch.
struct MotorGeometry {
    double r0 = 0.01;
    double r1 = 0.055;
    double r2 = 0.075;
    double R = 0.1;
    double alpha = std::numbers::pi / 2.0 / 0.015;  ///< angular velocity (rad/s)
    double T_final = 0.015;
    int n_magnets = 16;
    int n_coils = 48;
    double magnet_arc = 0.6;
    double pocket_arc = 0.85;  ///< air pockets fill the magnet band between magnet_arc and pocket_arc
    double coil_arc = 0.6;
    double magnet_r_in = 0.035;
    double magnet_r_out = 0.045;
    double coil_r_in = 0.08;
    double coil_r_out = 0.09;
    BlendMode blend = BlendMode::Standard;

    /// Throws ConfigError when an invariant is violated.
    void validate() const
    {
        auto fail = [](const std::string& what) { throw ConfigError("geometry: " + what); };
        if (!(0.0 < r0 && r0 < r1 && r1 < r2 && r2 < R)) fail("radii must satisfy 0 < r0 < r1 < r2 < R");
        if (!(r0 <= magnet_r_in && magnet_r_in < magnet_r_out && magnet_r_out <= r1))
            fail("magnet band must lie inside [r0, r1]");
        if (!(r2 <= coil_r_in && coil_r_in < coil_r_out && coil_r_out <= R))
            fail("coil band must lie inside [r2, R]");
        auto arc_ok = [](double a) { return a > 0.0 && a < 1.0; };
        if (!arc_ok(magnet_arc) || !arc_ok(coil_arc)) fail("arc fractions must lie in (0, 1)");
        if (!(pocket_arc >= magnet_arc && pocket_arc <= 1.0)) fail("pocket_arc must lie in [magnet_arc, 1]");
        if (n_magnets < 2 || n_magnets % 2 != 0) fail("n_magnets must be even and positive");
        if (n_coils < 3 || n_coils % 3 != 0) fail("n_coils must be a positive multiple of 3");
        if (!(T_final > 0.0)) fail("T_final must be positive");
        if (!std::isfinite(alpha)) fail("alpha must be finite");
    }

    double magnet_pitch() const { return 2.0 * std::numbers::pi / n_magnets; }
    double coil_pitch() const { return 2.0 * std::numbers::pi / n_coils; }
    double total_rotation() const { return alpha * T_final; }

    /// True when alpha*T is a whole number of magnet pitches.
    bool rotation_is_periodic(double tol = 1e-9) const
    {
        const double k = total_rotation() / magnet_pitch();
        return std::abs(k - std::round(k)) <= tol * std::max(1.0, std::abs(k));
    }

    /// Scaled-down motor with 16 magnets and 48 coils rotating 90 degrees in 15 ms.
    static MotorGeometry desk_motor() { return {}; }

    /// Small unit-scale annulus with 4 magnets and 6 coils; quarter turn over T = 1.
    static MotorGeometry annulus()
    {
        MotorGeometry g;
        g.r0 = 0.2;
        g.r1 = 0.5;
        g.r2 = 0.7;
        g.R = 1.0;
        g.alpha = std::numbers::pi / 2.0;
        g.T_final = 1.0;
        g.n_magnets = 4;
        g.n_coils = 6;
        g.magnet_arc = 0.5;
        g.pocket_arc = 0.7;
        g.coil_arc = 0.5;
        g.magnet_r_in = 0.3;
        g.magnet_r_out = 0.45;
        g.coil_r_in = 0.8;
        g.coil_r_out = 0.9;
        return g;
    }
};

enum class RegionKind { RotorIron, Magnet, RotorAirPocket, AirGap, StatorIron, Coil };

struct RegionId {
    RegionKind kind = RegionKind::RotorIron;
    int index = 0;  ///< magnet or coil number; 0 for the other kinds

    friend constexpr bool operator==(const RegionId&, const RegionId&) = default;
};

/// Integer code used in VTK cell data and MSH physical tags: 0..4 for the plain kinds,
/// 100 + k for magnet k and 200 + k for coil k.
inline int region_code(RegionId r)
{
    switch (r.kind) {
    case RegionKind::RotorIron: return 0;
    case RegionKind::RotorAirPocket: return 1;
    case RegionKind::AirGap: return 2;
    case RegionKind::StatorIron: return 3;
    case RegionKind::Magnet: return 100 + r.index;
    case RegionKind::Coil: return 200 + r.index;
    }
    return -1;
}

inline std::string region_name(RegionId r)
{
    switch (r.kind) {
    case RegionKind::RotorIron: return "rotor_iron";
    case RegionKind::RotorAirPocket: return "rotor_air_pocket";
    case RegionKind::AirGap: return "air_gap";
    case RegionKind::StatorIron: return "stator_iron";
    case RegionKind::Magnet: return "magnet:" + std::to_string(r.index);
    case RegionKind::Coil: return "coil:" + std::to_string(r.index);
    }
    return "unknown";
}

/// Inverse of region_name; throws ConfigError on unknown names.
inline RegionId parse_region_name(const std::string& s)
{
    if (s == "rotor_iron") return {RegionKind::RotorIron, 0};
    if (s == "rotor_air_pocket") return {RegionKind::RotorAirPocket, 0};
    if (s == "air_gap") return {RegionKind::AirGap, 0};
    if (s == "stator_iron") return {RegionKind::StatorIron, 0};
    auto indexed = [&](const std::string& prefix, RegionKind kind) -> std::optional<RegionId> {
        if (s.rfind(prefix, 0) != 0) return std::nullopt;
        const std::string rest = s.substr(prefix.size());
        if (rest.empty() || rest.find_first_not_of("0123456789") != std::string::npos)
            throw ConfigError("bad region index in '" + s + "'");
        return RegionId{kind, std::stoi(rest)};
    };
    if (auto r = indexed("magnet:", RegionKind::Magnet)) return *r;
    if (auto r = indexed("coil:", RegionKind::Coil)) return *r;
    throw ConfigError("unknown region name '" + s + "'");
}

/// Only the permanent magnets conduct; iron is laminated and the coils are stranded.
constexpr bool is_conducting(RegionId r) { return r.kind == RegionKind::Magnet; }

namespace detail {

inline double radius_tolerance(const MotorGeometry& g) { return 1e-12 * g.R; }

inline void check_radius(const MotorGeometry& g, double r, const char* what)
{
    const double tol = radius_tolerance(g);
    if (!(r >= g.r0 - tol && r <= g.R + tol)) {
        throw DomainError(std::string(what) + ": radius " + std::to_string(r) + " outside [r0, R]");
    }
}

inline void check_time(const MotorGeometry& g, double t, const char* what)
{
    const double tol = 1e-12 * g.T_final;
    if (!(t >= -tol && t <= g.T_final + tol)) {
        throw DomainError(std::string(what) + ": time " + std::to_string(t) + " outside [0, T]");
    }
}

/// psi without the range check; callers have validated r.
inline double psi_unchecked(const MotorGeometry& g, double r)
{
    if (g.blend == BlendMode::Rigid) return 1.0;
    if (r <= g.r1) return 1.0;
    if (r >= g.r2) return 0.0;
    return (g.r2 - r) / (g.r2 - g.r1);
}

}  // namespace detail

/// Angle in [0, 2*pi).
inline double polar_angle(const Vec2& x)
{
    double a = std::atan2(x.y, x.x);
    if (a < 0.0) a += 2.0 * std::numbers::pi;
    if (a >= 2.0 * std::numbers::pi) a -= 2.0 * std::numbers::pi;
    return a;
}

/// Sector k covers angles (k*p, (k+1)*p] with p = 2*pi/n; angle 0 belongs to sector 0.
/// An angle exactly on a sector boundary therefore goes to the lower index.
inline int sector_index(double angle, int n)
{
    const double pitch = 2.0 * std::numbers::pi / n;
    const int k = static_cast<int>(std::ceil(angle / pitch)) - 1;
    return std::clamp(k, 0, n - 1);
}

/// Rotor blend: 1 on (r0, r1), linear to 0 across the gap, 0 on (r2, R).
inline double blend_psi(const MotorGeometry& g, double r)
{
    detail::check_radius(g, r, "blend_psi");
    return detail::psi_unchecked(g, r);
}

/// Position at time t of the material point x of the reference configuration.
inline Vec2 deformation(const MotorGeometry& g, double t, const Vec2& x)
{
    const double r = norm(x);
    detail::check_radius(g, r, "deformation");
    detail::check_time(g, t, "deformation");
    return rotate(x, g.alpha * detail::psi_unchecked(g, r) * t);
}

/// Material point that sits at y at time t. The deformation preserves radii, so psi
/// can be evaluated at |y|.
inline Vec2 inverse_deformation(const MotorGeometry& g, double t, const Vec2& y)
{
    const double r = norm(y);
    detail::check_radius(g, r, "inverse_deformation");
    detail::check_time(g, t, "inverse_deformation");
    return rotate(y, -g.alpha * detail::psi_unchecked(g, r) * t);
}

/// v(y, t) = alpha * psi(|y|) * (-y2, y1). Independent of t.
inline Vec2 velocity(const MotorGeometry& g, double t, const Vec2& y)
{
    const double r = norm(y);
    detail::check_radius(g, r, "velocity");
    detail::check_time(g, t, "velocity");
    return g.alpha * detail::psi_unchecked(g, r) * perp(y);
}

/// Region of a point in the reference configuration.
inline RegionId region_of(const MotorGeometry& g, const Vec2& x)
{
    const double r = norm(x);
    detail::check_radius(g, r, "region_of");
    const double angle = polar_angle(x);
    if (r < g.r1) {
        if (r >= g.magnet_r_in && r <= g.magnet_r_out) {
            const int k = sector_index(angle, g.n_magnets);
            const double offset = std::abs(angle - (k + 0.5) * g.magnet_pitch()) / g.magnet_pitch();
            if (offset <= 0.5 * g.magnet_arc) return {RegionKind::Magnet, k};
            if (offset <= 0.5 * g.pocket_arc) return {RegionKind::RotorAirPocket, 0};
        }
        return {RegionKind::RotorIron, 0};
    }
    if (r <= g.r2) return {RegionKind::AirGap, 0};
    if (r >= g.coil_r_in && r <= g.coil_r_out) {
        const int k = sector_index(angle, g.n_coils);
        const double offset = std::abs(angle - (k + 0.5) * g.coil_pitch()) / g.coil_pitch();
        if (offset <= 0.5 * g.coil_arc) return {RegionKind::Coil, k};
    }
    return {RegionKind::StatorIron, 0};
}

/// Region occupying spatial point y at time t: classify the material point behind it.
inline RegionId region_at(const MotorGeometry& g, double t, const Vec2& y)
{
    return region_of(g, inverse_deformation(g, t, y));
}

}  // namespace rotostep
