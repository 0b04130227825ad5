#include "gradsdf/cell_interp.hpp"

#include <cmath>

namespace gradsdf {

std::array<double, 8> inverse_distance_weights(const Vec3& cell_min, double side, const Vec3& x) {
    const double eps = 1e-9 * side;
    // Distance from x to the low / high corner plane per axis.
    double lo[3] = {x.x - cell_min.x, x.y - cell_min.y, x.z - cell_min.z};
    double hi[3] = {side - lo[0], side - lo[1], side - lo[2]};

    // snapped[a] = -1 none, 0 low plane, 1 high plane.
    int snapped[3];
    for (int a = 0; a < 3; ++a) {
        snapped[a] = -1;
        if (std::abs(lo[a]) < eps)
            snapped[a] = 0;
        else if (std::abs(hi[a]) < eps)
            snapped[a] = 1;
    }

    std::array<double, 8> w{};
    double sum = 0.0;
    for (int k = 0; k < 8; ++k) {
        double wk = 1.0;
        bool zero = false;
        for (int a = 0; a < 3; ++a) {
            const int bit = (k >> a) & 1;
            if (snapped[a] >= 0) {
                // Exact limit: the degenerate axis contributes weight 1 to the
                // near plane and 0 to the far plane.
                if (bit != snapped[a]) zero = true;
            } else {
                wk /= std::abs(bit ? hi[a] : lo[a]);
            }
        }
        w[k] = zero ? 0.0 : wk;
        sum += w[k];
    }
    for (double& v : w) v /= sum;
    return w;
}

CellInterp cell_interp_ga(const Vec3& cell_min, double side, const Vec3& x,
                          const std::array<double, 8>& d, const std::array<Vec3, 8>& g) {
    CellInterp out;
    out.weights = inverse_distance_weights(cell_min, side, x);
    double acc = 0.0;
    for (int k = 0; k < 8; ++k) {
        out.offsets[k] = x - cell_corner(cell_min, side, k);
        acc += out.weights[k] * (d[k] + g[k].dot(out.offsets[k]));
    }
    out.value = acc;
    return out;
}

CellInterp cell_interp_tl(const Vec3& cell_min, double side, const Vec3& x,
                          const std::array<double, 8>& d) {
    CellInterp out;
    out.weights = inverse_distance_weights(cell_min, side, x);
    double acc = 0.0;
    for (int k = 0; k < 8; ++k) {
        out.offsets[k] = {0, 0, 0};  // gradients do not participate
        acc += out.weights[k] * d[k];
    }
    out.value = acc;
    return out;
}

}  // namespace gradsdf
