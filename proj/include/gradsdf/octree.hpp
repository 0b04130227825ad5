#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "gradsdf/cell_interp.hpp"
#include "gradsdf/core.hpp"

namespace gradsdf {

enum class OctreeStructure : uint8_t { SemiSparse = 0, Sparse = 1 };

struct OctreeConfig {
    int depth = 9;              // N: layers, root at depth 0, leaves at depth N-1
    int semi_sparse_depth = 5;  // M: depths 1..M allocate in full sibling groups
    double leaf_resolution = 0.10;  // r, meters; root side = r * 2^(N-1)
    Vec3 root_min{-12.8, -12.8, -12.8};
    OctreeStructure structure = OctreeStructure::SemiSparse;

    double root_side() const { return leaf_resolution * double(1 << (depth - 1)); }
    Aabb root() const {
        const double s = root_side();
        return {root_min, root_min + Vec3{s, s, s}};
    }
    void validate() const;
};

struct OctantAddr {
    int depth = 0;
    int32_t cx = 0, cy = 0, cz = 0;
};

struct InsertReport {
    uint64_t octants_created = 0;
    uint64_t vertices_created = 0;
    uint64_t dropped_points = 0;

    bool empty() const { return octants_created == 0 && vertices_created == 0; }
};

// Semi-sparse octree with learnable (SDF value, SDF gradient) pairs on the
// shared vertex lattice. Vertices live in an append-only slot arena; slot
// indices are stable across later insertions, while parameters() iterates in
// key-sorted order so per-run traversals are reproducible.
class SemiSparseOctree {
   public:
    explicit SemiSparseOctree(const OctreeConfig& config);

    const OctreeConfig& config() const { return cfg_; }

    // Allocates the root-to-leaf path of every in-bounds point; at depths
    // 1..M whole sibling groups are allocated. New vertices are initialized
    // from the inserting point set: d = distance to the nearest point (an
    // upper bound on the true distance), g = unit vector from that point to
    // the vertex; vertices with no point within 2x the octant side fall back
    // to d = octant side, g = 0. Reinserting the same points is a no-op.
    InsertReport insert_points(std::span<const Vec3> points);

    // Deepest allocated octant containing x. Faces resolve to the octant with
    // the larger cell index (half-open cells); the far root boundary belongs
    // to the last cell. Throws OutOfBounds.
    OctantAddr locate(const Vec3& x) const;

    struct InterpResult {
        double value = 0.0;
        OctantAddr octant;
        std::array<uint32_t, 8> slots{};   // vertex slots of the octant corners
        std::array<double, 8> weights{};   // d value / d d_k
        std::array<Vec3, 8> offsets{};     // d value / d g_k = weights[k] * offsets[k]
    };

    // Gradient-augmented interpolation at the located octant. Exact partials
    // with respect to the per-vertex parameters come along for training.
    InterpResult interpolate_ga(const Vec3& x) const;
    // Plain trilinear interpolation (ablation path); offsets are zero.
    InterpResult interpolate_tl(const Vec3& x) const;

    size_t vertex_count() const { return d_.size(); }
    size_t octant_count() const { return octant_total_; }

    // Parameter access by slot (training hot path). Stored f64; checkpoints
    // round the public OCTREE section to f32.
    std::span<double> values() { return d_; }
    std::span<const double> values() const { return d_; }
    std::span<double> gradients() { return g_flat_; }  // 3 per slot
    std::span<const double> gradients() const { return g_flat_; }
    std::array<int32_t, 3> key_of_slot(uint32_t slot) const { return unpack_key(keys_[slot]); }
    Vec3 vertex_position(uint32_t slot) const;

    // Key-sorted view of (key, slot); deterministic iteration order for
    // serialization and audits. Cached, rebuilt lazily after insertions.
    const std::vector<std::pair<uint64_t, uint32_t>>& parameters() const;

    // Full structural audit; returns a description of the first violation or
    // an empty string. Checks parent links, sibling completeness in
    // semi-sparse mode (depths 1..M), sparse-mode path-only allocation
    // support, vertex presence for every octant, and child-mask consistency.
    std::string audit() const;

    // Leaf-lattice cell coordinates of an in-bounds point (depth N-1).
    std::array<int32_t, 3> leaf_cell(const Vec3& x) const;

    // Overwrites the stored data of an existing vertex (checkpoint load).
    // Returns false if no vertex with that key exists.
    bool set_vertex_data(const std::array<int32_t, 3>& key, double d, const Vec3& g);

    // Octant cells per depth, sorted (checkpoint serialization).
    std::vector<std::vector<uint64_t>> octant_cells() const;
    // Rebuilds the octant index from serialized cells on a fresh tree.
    // Vertices are created with placeholder data; callers overwrite them via
    // set_vertex_data afterwards.
    void load_structure(const std::vector<std::vector<uint64_t>>& cells_per_depth);

   private:
    struct DepthMap {
        std::unordered_map<uint64_t, uint8_t> cells;  // packed cell -> child mask
    };

    double octant_side(int depth) const {
        return cfg_.leaf_resolution * double(1 << (cfg_.depth - 1 - depth));
    }
    Vec3 octant_min(const OctantAddr& a) const;
    bool allocated(int depth, int32_t cx, int32_t cy, int32_t cz) const;
    uint32_t ensure_vertex(int32_t kx, int32_t ky, int32_t kz, double octant_side,
                           const class PointGridIndex* init_index, InsertReport& report);
    void allocate_octant(int depth, int32_t cx, int32_t cy, int32_t cz,
                         const class PointGridIndex* init_index, InsertReport& report);
    InterpResult interpolate(const Vec3& x, bool gradient_augmented) const;

    OctreeConfig cfg_;
    std::vector<DepthMap> depths_;
    size_t octant_total_ = 0;

    std::unordered_map<uint64_t, uint32_t> vertex_index_;  // packed key -> slot
    std::vector<uint64_t> keys_;  // per slot
    std::vector<double> d_;       // per slot
    std::vector<double> g_flat_;  // 3 per slot

    mutable std::vector<std::pair<uint64_t, uint32_t>> sorted_view_;
    mutable bool sorted_dirty_ = true;

    // Valid only inside insert_points; used by vertex initialization.
    const std::vector<Vec3>* init_points_ref_ = nullptr;
};

}  // namespace gradsdf
