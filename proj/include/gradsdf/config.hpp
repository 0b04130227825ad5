#pragma once

#include <string>

#include "gradsdf/octree.hpp"
#include "gradsdf/residual.hpp"
#include "gradsdf/sampling.hpp"

namespace gradsdf {

struct LossWeights {
    double recon_surface = 1000.0;  // w_recon^S, surface L1
    double recon_perturb = 200.0;   // w_recon^P, perturbed L1
    double eik_surface = 10.0;      // Eikonal weight on surface + perturbed points
    double eik_free = 3.0;          // Eikonal weight on free-space points
    double proj = 100.0;            // projection loss on free-space points
};

struct TrainConfig {
    int iters_per_frame = 10;
    double lr_net = 1e-3;
    double lr_octree = 1e-2;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double fd_epsilon = 0.01;  // meters, central-difference stencil for SDF gradients
    uint64_t seed = 1;
    int threads = 0;              // 0 = hardware concurrency (capped)
    int64_t inject_nan_step = -1; // debug: poison the loss at this global step
};

struct EvalConfig {
    double resolution = 0.0125;  // meters, evaluation grid
    double padding = 0.15;       // meters around the ground-truth bounds
    double near_min = -0.1;      // kept region is d >= near_min
    double near_max = 0.2;       // near surface: near_min <= d <= near_max
    int mesh_samples = 200000;
    double mesh_threshold = 0.05;  // meters, F1 / completion-ratio threshold
};

struct RunConfig {
    OctreeConfig octree;
    bool interp_ga = true;  // gradient-augmented prior; false = trilinear (ablation)
    double grad_clamp = 10.0;
    bool residual_enabled = true;
    HashGridConfig hash;
    MlpConfig mlp;
    SampleParams sampling;
    LossWeights loss;
    TrainConfig train;
    EvalConfig eval;

    void validate() const;
};

// Named base profiles:
//   paper-defaults: N=9 M=5 r=0.10 (25.6 m root), 20480 rays, 2^19 tables
//   desk-scale:     N=7 M=4 r=0.05 (3.2 m root),   2048 rays, 2^17 tables
RunConfig profile_config(const std::string& name);

// "key = value" overlay, '#' comments; unknown keys are errors.
void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin);
void apply_config_file(RunConfig& cfg, const std::string& path);

// Canonical text form; parses back to an identical config. Stored verbatim as
// the checkpoint's META section.
std::string serialize_config(const RunConfig& cfg);

}  // namespace gradsdf
