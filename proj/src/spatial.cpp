#include "gradsdf/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gradsdf/kernels.hpp"

namespace gradsdf {

PointGridIndex::PointGridIndex(std::span<const Vec3> pts, double cell_size) {
    if (pts.empty()) return;

    Vec3 lo = pts[0], hi = pts[0];
    for (const Vec3& p : pts) {
        lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
        hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
    }
    const Vec3 ext = hi - lo;
    if (cell_size <= 0.0) {
        const double vol = std::max(ext.x * ext.y * ext.z, 1e-30);
        cell_size = std::max({std::cbrt(vol * 4.0 / double(pts.size())), ext.norm() / 1024.0,
                              1e-9});
    }
    cell_ = cell_size;
    origin_ = lo;
    nx_ = std::max(1, int(std::floor(ext.x / cell_)) + 1);
    ny_ = std::max(1, int(std::floor(ext.y / cell_)) + 1);
    nz_ = std::max(1, int(std::floor(ext.z / cell_)) + 1);

    const size_t ncells = size_t(nx_) * ny_ * nz_;
    auto cell_of = [&](const Vec3& p) {
        int cx = std::min(nx_ - 1, std::max(0, int(std::floor((p.x - origin_.x) / cell_))));
        int cy = std::min(ny_ - 1, std::max(0, int(std::floor((p.y - origin_.y) / cell_))));
        int cz = std::min(nz_ - 1, std::max(0, int(std::floor((p.z - origin_.z) / cell_))));
        return (size_t(cz) * ny_ + cy) * nx_ + cx;
    };

    std::vector<uint32_t> counts(ncells + 1, 0);
    for (const Vec3& p : pts) ++counts[cell_of(p) + 1];
    for (size_t i = 1; i <= ncells; ++i) counts[i] += counts[i - 1];
    cell_start_ = counts;

    xs_.resize(pts.size());
    ys_.resize(pts.size());
    zs_.resize(pts.size());
    ids_.resize(pts.size());
    std::vector<uint32_t> fill(ncells, 0);
    for (uint32_t i = 0; i < pts.size(); ++i) {
        const size_t c = cell_of(pts[i]);
        const uint32_t at = cell_start_[c] + fill[c]++;
        xs_[at] = pts[i].x;
        ys_[at] = pts[i].y;
        zs_[at] = pts[i].z;
        ids_[at] = i;
    }
}

double PointGridIndex::min_dist_sq_in_cells(const Vec3& q, int cx0, int cx1, int cy0, int cy1,
                                            int cz0, int cz1) const {
    double best = std::numeric_limits<double>::infinity();
    const auto& ops = kernels::active();
    for (int cz = cz0; cz <= cz1; ++cz) {
        for (int cy = cy0; cy <= cy1; ++cy) {
            // Cells along x are contiguous in the SoA arrays: one scan per row.
            const size_t row = (size_t(cz) * ny_ + cy) * nx_;
            const uint32_t a = cell_start_[row + cx0];
            const uint32_t b = cell_start_[row + cx1 + 1];
            if (b > a) {
                const double d2 = ops.min_dist_sq(xs_.data() + a, ys_.data() + a, zs_.data() + a,
                                                  int(b - a), q.x, q.y, q.z);
                best = std::min(best, d2);
            }
        }
    }
    return best;
}

double PointGridIndex::nearest_dist(const Vec3& q) const {
    if (xs_.empty()) return std::numeric_limits<double>::infinity();
    // Clamp the base cell into the grid; the (r-1)*cell ring bound still
    // holds and the ring count stays bounded by the grid extent.
    const int bx = std::clamp(int(std::floor((q.x - origin_.x) / cell_)), 0, nx_ - 1);
    const int by = std::clamp(int(std::floor((q.y - origin_.y) / cell_)), 0, ny_ - 1);
    const int bz = std::clamp(int(std::floor((q.z - origin_.z) / cell_)), 0, nz_ - 1);
    const int max_ring = std::max({std::max(bx, nx_ - 1 - bx), std::max(by, ny_ - 1 - by),
                                   std::max(bz, nz_ - 1 - bz), 0});

    double best = std::numeric_limits<double>::infinity();
    for (int r = 0; r <= max_ring; ++r) {
        // Any point in a cell at Chebyshev ring r is at least (r-1)*cell away.
        if (r > 0 && best <= double(r - 1) * cell_ * double(r - 1) * cell_) break;
        const int x0 = std::max(0, bx - r), x1 = std::min(nx_ - 1, bx + r);
        const int y0 = std::max(0, by - r), y1 = std::min(ny_ - 1, by + r);
        const int z0 = std::max(0, bz - r), z1 = std::min(nz_ - 1, bz + r);
        if (x0 > x1 || y0 > y1 || z0 > z1) continue;
        if (r == 0) {
            best = std::min(best, min_dist_sq_in_cells(q, bx, bx, by, by, bz, bz));
            continue;
        }
        // The six faces of the ring cube; edges/corners belong to the z faces.
        if (bz - r >= 0) best = std::min(best, min_dist_sq_in_cells(q, x0, x1, y0, y1, bz - r, bz - r));
        if (bz + r <= nz_ - 1 && r > 0)
            best = std::min(best, min_dist_sq_in_cells(q, x0, x1, y0, y1, bz + r, bz + r));
        const int zi0 = std::max(z0, bz - r + 1), zi1 = std::min(z1, bz + r - 1);
        if (zi0 <= zi1) {
            if (by - r >= 0)
                best = std::min(best, min_dist_sq_in_cells(q, x0, x1, by - r, by - r, zi0, zi1));
            if (by + r <= ny_ - 1)
                best = std::min(best, min_dist_sq_in_cells(q, x0, x1, by + r, by + r, zi0, zi1));
            const int yi0 = std::max(y0, by - r + 1), yi1 = std::min(y1, by + r - 1);
            if (yi0 <= yi1) {
                if (bx - r >= 0)
                    best = std::min(best, min_dist_sq_in_cells(q, bx - r, bx - r, yi0, yi1, zi0, zi1));
                if (bx + r <= nx_ - 1)
                    best = std::min(best, min_dist_sq_in_cells(q, bx + r, bx + r, yi0, yi1, zi0, zi1));
            }
        }
    }
    return std::sqrt(best);
}

PointGridIndex::Hit PointGridIndex::nearest(const Vec3& q, double cutoff) const {
    if (xs_.empty()) return {std::numeric_limits<double>::infinity(), -1};
    const int bx = std::clamp(int(std::floor((q.x - origin_.x) / cell_)), 0, nx_ - 1);
    const int by = std::clamp(int(std::floor((q.y - origin_.y) / cell_)), 0, ny_ - 1);
    const int bz = std::clamp(int(std::floor((q.z - origin_.z) / cell_)), 0, nz_ - 1);
    const int max_ring = std::max({std::max(bx, nx_ - 1 - bx), std::max(by, ny_ - 1 - by),
                                   std::max(bz, nz_ - 1 - bz), 0});

    double best = std::numeric_limits<double>::infinity();
    int best_id = -1;
    auto scan_cells = [&](int cx0, int cx1, int cy0, int cy1, int cz0, int cz1) {
        for (int cz = cz0; cz <= cz1; ++cz)
            for (int cy = cy0; cy <= cy1; ++cy) {
                const size_t row = (size_t(cz) * ny_ + cy) * nx_;
                const uint32_t a = cell_start_[row + cx0];
                const uint32_t b = cell_start_[row + cx1 + 1];
                for (uint32_t i = a; i < b; ++i) {
                    const double dx = xs_[i] - q.x, dy = ys_[i] - q.y, dz = zs_[i] - q.z;
                    const double d2 = dx * dx + dy * dy + dz * dz;
                    if (d2 < best || (d2 == best && best_id >= 0 && int(ids_[i]) < best_id)) {
                        best = d2;
                        best_id = int(ids_[i]);
                    }
                }
            }
    };

    const double stop = cutoff * cutoff;
    for (int r = 0; r <= max_ring; ++r) {
        const double ring_min = double(r - 1) * cell_;
        if (r > 0 && (best <= ring_min * ring_min || stop < ring_min * ring_min)) break;
        const int x0 = std::max(0, bx - r), x1 = std::min(nx_ - 1, bx + r);
        const int y0 = std::max(0, by - r), y1 = std::min(ny_ - 1, by + r);
        const int z0 = std::max(0, bz - r), z1 = std::min(nz_ - 1, bz + r);
        if (x0 > x1 || y0 > y1 || z0 > z1) continue;
        if (r == 0) {
            scan_cells(bx, bx, by, by, bz, bz);
            continue;
        }
        if (bz - r >= 0) scan_cells(x0, x1, y0, y1, bz - r, bz - r);
        if (bz + r <= nz_ - 1) scan_cells(x0, x1, y0, y1, bz + r, bz + r);
        const int zi0 = std::max(z0, bz - r + 1), zi1 = std::min(z1, bz + r - 1);
        if (zi0 <= zi1) {
            if (by - r >= 0) scan_cells(x0, x1, by - r, by - r, zi0, zi1);
            if (by + r <= ny_ - 1) scan_cells(x0, x1, by + r, by + r, zi0, zi1);
            const int yi0 = std::max(y0, by - r + 1), yi1 = std::min(y1, by + r - 1);
            if (yi0 <= yi1) {
                if (bx - r >= 0) scan_cells(bx - r, bx - r, yi0, yi1, zi0, zi1);
                if (bx + r <= nx_ - 1) scan_cells(bx + r, bx + r, yi0, yi1, zi0, zi1);
            }
        }
    }
    const double d = std::sqrt(best);
    if (d > cutoff) return {std::numeric_limits<double>::infinity(), -1};
    return {d, best_id};
}

}  // namespace gradsdf
