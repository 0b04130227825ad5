#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gradsdf/core.hpp"

namespace gradsdf {

// Analytic obstacles with exact signed distance. `Room` is the complement of
// an open box: free space inside, solid outside. It models a closed room
// exactly, which a union of wall slabs cannot (the min-combination is only a
// lower bound inside glued corners).
struct Primitive {
    enum class Kind { Sphere, Box, Room };
    Kind kind = Kind::Sphere;
    Vec3 center;
    Vec3 half;            // box / room half-extents
    double radius = 0.0;  // sphere
};

// Union of disjoint primitives, combined by pointwise min. Exact everywhere
// as long as primitives do not overlap (and interior obstacles of a Room stay
// strictly inside it).
struct AnalyticScene {
    std::vector<Primitive> primitives;
};

double primitive_sdf(const Primitive& p, const Vec3& x);

double scene_sdf(const AnalyticScene& scene, const Vec3& x);

// Smallest distance-tie gap at x: min over (second-nearest primitive distance
// minus nearest) and each primitive's internal medial gap. Zero on the medial
// set; used to detect and skip undefined-gradient points.
double scene_medial_margin(const AnalyticScene& scene, const Vec3& x);

// Unit gradient (x - x*)/d. Empty when x is within `tol` of the medial set.
std::optional<Vec3> scene_sdf_gradient(const AnalyticScene& scene, const Vec3& x,
                                       double tol = 1e-9);

struct Frame {
    Vec3 origin;
    std::vector<Vec3> points;  // surface hits, global frame
    uint32_t id = 0;
};

struct EmptyFrame : std::runtime_error {
    explicit EmptyFrame(const std::string& what) : std::runtime_error(what) {}
};

// Sphere-traces `rays_per_frame` uniformly random directions from each pose.
// Rays terminate at |d| < 1e-4 m or when leaving `root`; misses are dropped.
// Per-frame generator seed is `seed ^ frame_id`, so frames are reproducible
// independently of each other.
//
// Preconditions: every pose strictly outside all primitives. Throws
// EmptyFrame if a pose produces zero hits.
std::vector<Frame> generate_frames(const AnalyticScene& scene, const std::vector<Vec3>& trajectory,
                                   int rays_per_frame, uint64_t seed, const Aabb& root);

// Scene description file: "key = value" lines, '#' comments.
//   root_min = x y z        root_max = x y z
//   sphere   = cx cy cz radius
//   box      = cx cy cz hx hy hz
//   room     = cx cy cz hx hy hz
//   pose     = x y z
struct SceneFile {
    AnalyticScene scene;
    Aabb root;
    std::vector<Vec3> trajectory;
};

SceneFile parse_scene_file(const std::string& path);
SceneFile parse_scene_text(const std::string& text, const std::string& origin_name);

}  // namespace gradsdf
