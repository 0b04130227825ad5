#pragma once

#include <iosfwd>
#include <string>

#include "gradsdf/config.hpp"
#include "gradsdf/mesh.hpp"
#include "gradsdf/scene.hpp"

namespace gradsdf {

struct MeshMetrics {
    double chamfer_cm = 0.0;         // (accuracy + completion) / 2
    double f1_pct = 0.0;             // harmonic mean of precision and recall
    double precision_pct = 0.0;      // recon samples within threshold of gt
    double recall_pct = 0.0;         // gt samples within threshold of recon
    double completion_cm = 0.0;      // mean distance gt -> recon
    double completion_ratio_pct = 0.0;
    double accuracy_cm = 0.0;        // mean distance recon -> gt
};

// Area-weighted clouds of `samples` points from each mesh (the same seed on
// both sides, so swapping the meshes swaps accuracy/completion and
// precision/recall exactly).
MeshMetrics mesh_metrics(const TriMesh& recon, const TriMesh& gt, int samples, double threshold,
                         uint64_t seed);

struct SdfFieldMetrics {
    double mae_all_cm = 0.0, mae_near_cm = 0.0, mae_far_cm = 0.0;
    double grad_mae_all_rad = 0.0, grad_mae_near_rad = 0.0, grad_mae_far_rad = 0.0;
    double valid_ratio_pct = 0.0;
    // Fraction of near-surface points whose model gradient norm lies in
    // [0.8, 1.2] (Eikonal health; counted over points with a valid stencil).
    double near_grad_norm_in_range_pct = 0.0;
    uint64_t kept = 0, near_count = 0, far_count = 0;
    uint64_t medial_skipped = 0;    // oracle gradient undefined
    uint64_t gradient_skipped = 0;  // model stencil left the domain
};

struct FieldWithGradient {
    BatchField value;
    double fd_eps = 0.01;  // central-difference step for the model gradient
    Aabb domain;           // evaluation and stencils must stay inside
};

// Grid-center evaluation against the analytic oracle. Points with oracle
// d < eval.near_min are discarded; near region is near_min <= d <= near_max.
// The grid is clamped into the model domain.
SdfFieldMetrics eval_sdf_field(const FieldWithGradient& model, const AnalyticScene& scene,
                               const SdfGridSpec& grid, const EvalConfig& eval);

// Evaluation grid for a scene: ground-truth bounds + padding, clamped to the
// domain.
SdfGridSpec eval_grid_for(const Aabb& gt_bounds, const Aabb& domain, const EvalConfig& eval);

// One machine-parseable "name = value" line per metric.
void write_mesh_metrics(std::ostream& os, const MeshMetrics& m);
void write_sdf_metrics(std::ostream& os, const SdfFieldMetrics& m);

// Slice file: magic "NSLC", u32 version=1, f64[3] grid origin, f64 z,
// u32 nx, u32 ny, f64 resolution, nx*ny f32 values row-major (x fastest).
// Values are sampled at pixel centers: origin + (i + 0.5) * resolution.
void write_slice(const std::string& path, const BatchField& field, const Vec3& origin, double z,
                 uint32_t nx, uint32_t ny, double resolution);

}  // namespace gradsdf
