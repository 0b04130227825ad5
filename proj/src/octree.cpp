#include "gradsdf/octree.hpp"

#include <algorithm>
#include <cmath>

#include "gradsdf/spatial.hpp"

namespace gradsdf {

void OctreeConfig::validate() const {
    if (depth < 2) throw ConfigError("octree depth must be >= 2");
    if (semi_sparse_depth < 1 || semi_sparse_depth >= depth)
        throw ConfigError("octree semi-sparse depth must satisfy 1 <= M < N");
    if (depth > 21) throw ConfigError("octree depth too large for 21-bit lattice keys");
    if (!(leaf_resolution > 0.0)) throw ConfigError("leaf resolution must be positive");
    if (!root_min.finite()) throw ConfigError("root min must be finite");
}

SemiSparseOctree::SemiSparseOctree(const OctreeConfig& config) : cfg_(config) {
    cfg_.validate();
    depths_.resize(cfg_.depth);
    InsertReport ignored;
    allocate_octant(0, 0, 0, 0, nullptr, ignored);
}

Vec3 SemiSparseOctree::octant_min(const OctantAddr& a) const {
    const double s = octant_side(a.depth);
    return cfg_.root_min + Vec3{s * a.cx, s * a.cy, s * a.cz};
}

Vec3 SemiSparseOctree::vertex_position(uint32_t slot) const {
    const auto k = unpack_key(keys_[slot]);
    const double r = cfg_.leaf_resolution;
    return cfg_.root_min + Vec3{r * k[0], r * k[1], r * k[2]};
}

bool SemiSparseOctree::allocated(int depth, int32_t cx, int32_t cy, int32_t cz) const {
    return depths_[depth].cells.count(pack_key(cx, cy, cz)) != 0;
}

std::array<int32_t, 3> SemiSparseOctree::leaf_cell(const Vec3& x) const {
    const int n = 1 << (cfg_.depth - 1);
    const double r = cfg_.leaf_resolution;
    auto clampc = [n](double v) { return std::min(int32_t(n - 1), std::max(int32_t(0), int32_t(std::floor(v)))); };
    return {clampc((x.x - cfg_.root_min.x) / r), clampc((x.y - cfg_.root_min.y) / r),
            clampc((x.z - cfg_.root_min.z) / r)};
}

uint32_t SemiSparseOctree::ensure_vertex(int32_t kx, int32_t ky, int32_t kz, double octant_side,
                                         const PointGridIndex* init_index, InsertReport& report) {
    const uint64_t key = pack_key(kx, ky, kz);
    auto it = vertex_index_.find(key);
    if (it != vertex_index_.end()) return it->second;

    const uint32_t slot = uint32_t(keys_.size());
    vertex_index_.emplace(key, slot);
    keys_.push_back(key);

    double d = octant_side;
    Vec3 g{0, 0, 0};
    if (init_index && init_index->size() > 0) {
        const double r = cfg_.leaf_resolution;
        const Vec3 pos = cfg_.root_min + Vec3{r * kx, r * ky, r * kz};
        const auto hit = init_index->nearest(pos, 2.0 * octant_side);
        if (hit.index >= 0) {
            d = hit.dist;
            if (hit.dist > 1e-12) g = (pos - init_points_ref_->operator[](hit.index)) / hit.dist;
        }
    }
    d_.push_back(d);
    g_flat_.push_back(g.x);
    g_flat_.push_back(g.y);
    g_flat_.push_back(g.z);
    ++report.vertices_created;
    sorted_dirty_ = true;
    return slot;
}

void SemiSparseOctree::allocate_octant(int depth, int32_t cx, int32_t cy, int32_t cz,
                                       const PointGridIndex* init_index, InsertReport& report) {
    const uint64_t key = pack_key(cx, cy, cz);
    auto& cells = depths_[depth].cells;
    if (cells.count(key)) return;
    cells.emplace(key, 0);
    ++octant_total_;
    ++report.octants_created;
    if (depth > 0) {
        auto parent = depths_[depth - 1].cells.find(pack_key(cx >> 1, cy >> 1, cz >> 1));
        parent->second |= uint8_t(1u << ((cx & 1) | ((cy & 1) << 1) | ((cz & 1) << 2)));
    }
    // All octant corners live on the leaf vertex lattice.
    const int32_t stride = 1 << (cfg_.depth - 1 - depth);
    const double side = octant_side(depth);
    for (int k = 0; k < 8; ++k)
        ensure_vertex((cx + (k & 1)) * stride, (cy + ((k >> 1) & 1)) * stride,
                      (cz + ((k >> 2) & 1)) * stride, side, init_index, report);
}

InsertReport SemiSparseOctree::insert_points(std::span<const Vec3> points) {
    InsertReport report;
    const Aabb root = cfg_.root();

    std::vector<Vec3> kept;
    kept.reserve(points.size());
    for (const Vec3& p : points) {
        if (p.finite() && root.contains(p))
            kept.push_back(p);
        else
            ++report.dropped_points;
    }
    if (kept.empty()) return report;

    PointGridIndex index(kept, cfg_.leaf_resolution);
    init_points_ref_ = &kept;

    const int leaf_depth = cfg_.depth - 1;
    for (const Vec3& p : kept) {
        const auto leaf = leaf_cell(p);
        for (int d = 1; d <= leaf_depth; ++d) {
            const int32_t cx = leaf[0] >> (leaf_depth - d);
            const int32_t cy = leaf[1] >> (leaf_depth - d);
            const int32_t cz = leaf[2] >> (leaf_depth - d);
            const bool sibling_group =
                cfg_.structure == OctreeStructure::SemiSparse && d <= cfg_.semi_sparse_depth;
            if (sibling_group) {
                const int32_t px = (cx >> 1) << 1, py = (cy >> 1) << 1, pz = (cz >> 1) << 1;
                for (int k = 0; k < 8; ++k)
                    allocate_octant(d, px + (k & 1), py + ((k >> 1) & 1), pz + ((k >> 2) & 1),
                                    &index, report);
            } else {
                allocate_octant(d, cx, cy, cz, &index, report);
            }
        }
    }
    init_points_ref_ = nullptr;
    return report;
}

OctantAddr SemiSparseOctree::locate(const Vec3& x) const {
    if (!cfg_.root().contains(x))
        throw OutOfBounds("locate: point outside octree root");
    const auto leaf = leaf_cell(x);
    const int leaf_depth = cfg_.depth - 1;
    OctantAddr at{0, 0, 0, 0};
    for (int d = 1; d <= leaf_depth; ++d) {
        const int32_t cx = leaf[0] >> (leaf_depth - d);
        const int32_t cy = leaf[1] >> (leaf_depth - d);
        const int32_t cz = leaf[2] >> (leaf_depth - d);
        if (!allocated(d, cx, cy, cz)) break;
        at = {d, cx, cy, cz};
    }
    return at;
}

SemiSparseOctree::InterpResult SemiSparseOctree::interpolate(const Vec3& x,
                                                             bool gradient_augmented) const {
    InterpResult out;
    out.octant = locate(x);
    const int32_t stride = 1 << (cfg_.depth - 1 - out.octant.depth);
    std::array<double, 8> dv;
    std::array<Vec3, 8> gv;
    for (int k = 0; k < 8; ++k) {
        const int32_t kx = (out.octant.cx + (k & 1)) * stride;
        const int32_t ky = (out.octant.cy + ((k >> 1) & 1)) * stride;
        const int32_t kz = (out.octant.cz + ((k >> 2) & 1)) * stride;
        const uint32_t slot = vertex_index_.at(pack_key(kx, ky, kz));
        out.slots[k] = slot;
        dv[k] = d_[slot];
        gv[k] = {g_flat_[3 * slot], g_flat_[3 * slot + 1], g_flat_[3 * slot + 2]};
    }
    const Vec3 cmin = octant_min(out.octant);
    const double side = octant_side(out.octant.depth);
    const CellInterp ci = gradient_augmented ? cell_interp_ga(cmin, side, x, dv, gv)
                                             : cell_interp_tl(cmin, side, x, dv);
    out.value = ci.value;
    out.weights = ci.weights;
    out.offsets = ci.offsets;
    return out;
}

SemiSparseOctree::InterpResult SemiSparseOctree::interpolate_ga(const Vec3& x) const {
    return interpolate(x, true);
}

SemiSparseOctree::InterpResult SemiSparseOctree::interpolate_tl(const Vec3& x) const {
    return interpolate(x, false);
}

const std::vector<std::pair<uint64_t, uint32_t>>& SemiSparseOctree::parameters() const {
    if (sorted_dirty_) {
        sorted_view_.clear();
        sorted_view_.reserve(keys_.size());
        for (uint32_t s = 0; s < keys_.size(); ++s) sorted_view_.emplace_back(keys_[s], s);
        std::sort(sorted_view_.begin(), sorted_view_.end());
        sorted_dirty_ = false;
    }
    return sorted_view_;
}

std::vector<std::vector<uint64_t>> SemiSparseOctree::octant_cells() const {
    std::vector<std::vector<uint64_t>> out(cfg_.depth);
    for (int d = 0; d < cfg_.depth; ++d) {
        out[d].reserve(depths_[d].cells.size());
        for (const auto& [key, mask] : depths_[d].cells) out[d].push_back(key);
        std::sort(out[d].begin(), out[d].end());
    }
    return out;
}

void SemiSparseOctree::load_structure(const std::vector<std::vector<uint64_t>>& cells_per_depth) {
    if (octant_total_ != 1 || vertex_count() != 8)
        throw ConfigError("load_structure requires a fresh tree");
    if (int(cells_per_depth.size()) != cfg_.depth)
        throw ConfigError("load_structure: depth count mismatch");
    InsertReport ignored;
    for (int d = 0; d < cfg_.depth; ++d) {
        for (uint64_t cell : cells_per_depth[d]) {
            const auto c = unpack_key(cell);
            allocate_octant(d, c[0], c[1], c[2], nullptr, ignored);
        }
    }
    const std::string problem = audit();
    if (!problem.empty()) throw ConfigError("load_structure: invalid octant set: " + problem);
}

bool SemiSparseOctree::set_vertex_data(const std::array<int32_t, 3>& key, double d, const Vec3& g) {
    auto it = vertex_index_.find(pack_key(key[0], key[1], key[2]));
    if (it == vertex_index_.end()) return false;
    const uint32_t slot = it->second;
    d_[slot] = d;
    g_flat_[3 * slot] = g.x;
    g_flat_[3 * slot + 1] = g.y;
    g_flat_[3 * slot + 2] = g.z;
    return true;
}

std::string SemiSparseOctree::audit() const {
    for (int d = 0; d < cfg_.depth; ++d) {
        for (const auto& [key, mask] : depths_[d].cells) {
            const auto c = unpack_key(key);
            if (c[0] >= (1 << d) || c[1] >= (1 << d) || c[2] >= (1 << d))
                return "octant cell out of range at depth " + std::to_string(d);
            if (d > 0) {
                const uint64_t pkey = pack_key(c[0] >> 1, c[1] >> 1, c[2] >> 1);
                auto pit = depths_[d - 1].cells.find(pkey);
                if (pit == depths_[d - 1].cells.end())
                    return "orphan octant at depth " + std::to_string(d);
                const int bit = (c[0] & 1) | ((c[1] & 1) << 1) | ((c[2] & 1) << 2);
                if (!(pit->second & (1u << bit)))
                    return "parent mask missing child bit at depth " + std::to_string(d);
            }
            // Sibling completeness of semi-sparse layers.
            if (cfg_.structure == OctreeStructure::SemiSparse && d >= 1 &&
                d <= cfg_.semi_sparse_depth) {
                const int32_t px = (c[0] >> 1) << 1, py = (c[1] >> 1) << 1, pz = (c[2] >> 1) << 1;
                for (int k = 0; k < 8; ++k)
                    if (!allocated(d, px + (k & 1), py + ((k >> 1) & 1), pz + ((k >> 2) & 1)))
                        return "incomplete sibling group at depth " + std::to_string(d);
            }
            // Mask bits must match actually allocated children.
            if (d + 1 < cfg_.depth) {
                for (int k = 0; k < 8; ++k) {
                    const bool child = allocated(d + 1, c[0] * 2 + (k & 1), c[1] * 2 + ((k >> 1) & 1),
                                                 c[2] * 2 + ((k >> 2) & 1));
                    if (child != bool(mask & (1u << k)))
                        return "stale child mask at depth " + std::to_string(d);
                }
            } else if (mask != 0) {
                return "leaf octant claims children";
            }
            // All 8 corner vertices must exist.
            const int32_t stride = 1 << (cfg_.depth - 1 - d);
            for (int k = 0; k < 8; ++k) {
                const uint64_t vk = pack_key((c[0] + (k & 1)) * stride, (c[1] + ((k >> 1) & 1)) * stride,
                                             (c[2] + ((k >> 2) & 1)) * stride);
                if (!vertex_index_.count(vk)) return "missing corner vertex at depth " + std::to_string(d);
            }
        }
    }
    if (depths_[0].cells.size() != 1) return "root layer must hold exactly the root octant";
    return "";
}

}  // namespace gradsdf
