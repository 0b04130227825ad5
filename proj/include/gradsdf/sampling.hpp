#pragma once

#include <span>
#include <vector>

#include "gradsdf/core.hpp"
#include "gradsdf/scene.hpp"

namespace gradsdf {

// Keyframes with the set of surface leaf octants (packed leaf cells) each one
// observes. Insertion keeps stream order; ids are strictly increasing.
class KeyframeStore {
   public:
    struct Entry {
        Frame frame;
        std::vector<uint64_t> octants;  // sorted unique packed leaf cells
    };

    // Inserts when the octant-set IoU against the last inserted keyframe is
    // below `min_iou` (low overlap means enough newly observed area). The
    // first frame is always inserted.
    bool maybe_insert(Frame frame, std::vector<uint64_t> octants, double min_iou);

    // Greedy max-coverage selection of up to `width` frames: repeatedly take
    // the frame observing the most unmasked octants (ties go to the most
    // recent frame), mask them; when everything is masked, reset the mask to
    // just the last selected frame's octants and continue. Frames are never
    // selected twice. Returns indices into entries().
    std::vector<size_t> select(int width) const;

    std::span<const Entry> entries() const { return entries_; }
    bool empty() const { return entries_.empty(); }
    size_t size() const { return entries_.size(); }

    // Re-adds a previously decided keyframe verbatim (checkpoint resume).
    void restore_entry(Frame frame, std::vector<uint64_t> octants);

   private:
    std::vector<Entry> entries_;
};

double octant_iou(const std::vector<uint64_t>& a, const std::vector<uint64_t>& b);

struct SampleParams {
    int total_rays = 20480;       // N, split evenly across the frames of a batch
    double free_margin = 0.05;    // delta: free-space lambda ~ U(delta, 1-delta)
    double perturb_sigma = 0.06;  // sigma: alpha ~ N(1, sigma^2), clamped to 1 +- 2 sigma
    int n_free = 1;
    int n_perturb = 2;
    double keyframe_min_iou = 0.85;  // c_min
    int keyframe_window = 8;         // W
};

struct SampleBatch {
    std::vector<Vec3> surface;  // P_S

    std::vector<Vec3> perturbed;  // P_P
    std::vector<double> perturbed_target;  // d~ = min distance to P_S, >= 0
    std::vector<int8_t> perturbed_sign;    // +1 in front of the surface, -1 behind

    std::vector<Vec3> free;  // P_F, strictly between origin and hit
    std::vector<double> free_target;

    uint64_t seed = 0;
    uint64_t dropped_out_of_root = 0;  // perturbed points that left the root
    uint64_t quota_reductions = 0;     // frames with fewer points than their ray quota
};

// Draws floor(total_rays / #frames) rays per frame (without replacement;
// short frames get their full point count). Per ray: the hit itself, n_perturb
// perturbed samples, n_free free-space samples. Targets are exact nearest
// distances to the batch's surface set. Fully deterministic under `seed`.
SampleBatch generate_batch(std::span<const Frame* const> frames, const SampleParams& params,
                           const Aabb& root, uint64_t seed);

// Debug dump, little-endian: magic "NSBT", u32 version=1, u32 surface count,
// u32 perturbed count, u32 free count; then surface f32[3] each, perturbed
// f32[3] + f32 target + i8 sign each, free f32[3] + f32 target each.
void write_batch_dump(const std::string& path, const SampleBatch& batch);

}  // namespace gradsdf
