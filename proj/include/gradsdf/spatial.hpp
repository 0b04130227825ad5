#pragma once

#include <span>
#include <vector>

#include "gradsdf/core.hpp"

namespace gradsdf {

// Uniform hash-free grid over a point set, rebuilt per batch. Exact nearest
// queries via expanding cell shells: a shell is only skipped once its closest
// possible distance exceeds the best hit so far.
class PointGridIndex {
   public:
    PointGridIndex() = default;
    PointGridIndex(std::span<const Vec3> pts, double cell_size = 0.0);

    size_t size() const { return xs_.size(); }

    // Exact nearest distance (value only; SIMD scan within cells).
    double nearest_dist(const Vec3& q) const;

    struct Hit {
        double dist;
        int index;  // index into the input span; -1 if nothing within cutoff
    };
    // Exact nearest point with index; gives up early when nothing can be
    // closer than `cutoff`. Ties resolve to the lowest input index.
    Hit nearest(const Vec3& q, double cutoff) const;

   private:
    double min_dist_sq_in_cells(const Vec3& q, int cx0, int cx1, int cy0, int cy1, int cz0,
                                int cz1) const;

    Vec3 origin_;
    double cell_ = 1.0;
    int nx_ = 0, ny_ = 0, nz_ = 0;
    std::vector<uint32_t> cell_start_;  // nx*ny*nz + 1 offsets into the SoA arrays
    std::vector<double> xs_, ys_, zs_;
    std::vector<uint32_t> ids_;
};

}  // namespace gradsdf
