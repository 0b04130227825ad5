#pragma once

#include <array>
#include <string>

#include "gradsdf/config.hpp"
#include "gradsdf/mesh.hpp"
#include "gradsdf/scene.hpp"

namespace gradsdf {

// Interpolation-prior study: builds semi-sparse and sparse octrees from the
// same frames, writes exact oracle data (d and grad d) into every vertex, and
// measures interpolation error of {ga, tl} x {semi-sparse, sparse} on a dense
// grid. Includes an error-bound audit on octants where the Hessian supremum
// is known analytically (a single active sphere: M = 1 / distance to its
// center).
struct PriorStudyRow {
    std::string structure;  // semi_sparse | sparse
    std::string interp;     // ga | tl
    double mean_err_all = 0, max_err_all = 0;    // meters
    double mean_err_near = 0, max_err_near = 0;  // oracle d <= eval.near_max
    double mean_err_far = 0, max_err_far = 0;
    uint64_t vertices = 0, octants = 0;
};

struct PriorStudyResult {
    std::array<PriorStudyRow, 4> rows;  // semi-ga, semi-tl, sparse-ga, sparse-tl
    uint64_t bound_octants_audited = 0;
    uint64_t bound_violations = 0;
    double bound_max_ratio = 0.0;  // max of (sampled max ga error) / (3 M L^2 / 8)
    uint64_t medial_vertices = 0;  // vertices whose oracle gradient was undefined
};

PriorStudyResult prior_study(const AnalyticScene& scene, const std::vector<Frame>& frames,
                             const OctreeConfig& base, const SdfGridSpec& grid,
                             const EvalConfig& eval);

std::string study_csv(const PriorStudyResult& r);

// Overwrites every vertex with exact oracle data; returns the number of
// vertices on the medial set (their gradient is left at zero).
uint64_t set_oracle_vertex_data(SemiSparseOctree& tree, const AnalyticScene& scene);

}  // namespace gradsdf
