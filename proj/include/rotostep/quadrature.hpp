#pragma once

#include "rotostep/errors.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

namespace rotostep {

/// Gauss-Legendre nodes and weights on [0, 1].
inline std::vector<std::pair<double, double>> gauss_legendre_01(int n)
{
    std::vector<std::pair<double, double>> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = pk;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        out[static_cast<std::size_t>(i)] = {0.5 * (1.0 - x), 1.0 / ((1.0 - x * x) * dp * dp)};
    }
    return out;
}

struct TetQuadPoint {
    std::array<double, 4> bary;
    double weight;  ///< fraction of the tet volume; weights sum to 1
};

/// Collapsed-coordinate (Duffy) product rule with n points per direction; exact for
/// polynomials of total degree 2n - 3, so n >= 2.
inline std::vector<TetQuadPoint> tet_rule(int n)
{
    if (n < 2) throw ConfigError("tet_rule: need at least 2 points per direction");
    const auto g = gauss_legendre_01(n);
    std::vector<TetQuadPoint> pts;
    pts.reserve(static_cast<std::size_t>(n * n * n));
    for (const auto& [u, wu] : g) {
        for (const auto& [v, wv] : g) {
            for (const auto& [w, ww] : g) {
                const double x1 = u;
                const double x2 = v * (1.0 - u);
                const double x3 = w * (1.0 - u) * (1.0 - v);
                const double jac = (1.0 - u) * (1.0 - u) * (1.0 - v);
                pts.push_back({{1.0 - x1 - x2 - x3, x1, x2, x3}, 6.0 * wu * wv * ww * jac});
            }
        }
    }
    return pts;
}

}  // namespace rotostep
