#pragma once

#include <array>

#include "gradsdf/core.hpp"

namespace gradsdf {

// Corner k of a cube cell uses bit 0 for x, bit 1 for y, bit 2 for z:
// corner position = cell_min + side * (k&1, (k>>1)&1, (k>>2)&1).
inline Vec3 cell_corner(const Vec3& cell_min, double side, int k) {
    return {cell_min.x + side * double(k & 1), cell_min.y + side * double((k >> 1) & 1),
            cell_min.z + side * double((k >> 2) & 1)};
}

// Interpolation weights: w_k is the reciprocal of the product of per-axis
// absolute distances from x to corner k, normalized to sum 1. Axes where x
// lies within eps_snap = 1e-9 * side of a corner plane are taken in the exact
// limit: the full weight of that axis concentrates on the near plane. The
// normalized weights coincide with standard trilinear weights (the unit and
// acceptance tests check this against an independent trilinear oracle).
std::array<double, 8> inverse_distance_weights(const Vec3& cell_min, double side, const Vec3& x);

struct CellInterp {
    double value = 0.0;
    std::array<double, 8> weights{};   // d(value)/d(corner value d_k)
    std::array<Vec3, 8> offsets{};     // x - x_k; d(value)/d(corner gradient g_k) = w_k * offset_k
};

// Gradient-augmented interpolation: blends per-corner first-order
// extrapolations d_k + g_k . (x - x_k). Linear in (d_k, g_k), so the reported
// partials are exact.
CellInterp cell_interp_ga(const Vec3& cell_min, double side, const Vec3& x,
                          const std::array<double, 8>& d, const std::array<Vec3, 8>& g);

// Plain trilinear interpolation of corner values (gradients ignored).
CellInterp cell_interp_tl(const Vec3& cell_min, double side, const Vec3& x,
                          const std::array<double, 8>& d);

}  // namespace gradsdf
