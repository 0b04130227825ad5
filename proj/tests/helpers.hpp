#pragma once

// Shared builders and oracles for the test suites and the acceptance runner.

#include <algorithm>
#include <cmath>
#include <vector>

#include "gradsdf/config.hpp"
#include "gradsdf/rng.hpp"
#include "gradsdf/scene.hpp"
#include "gradsdf/training.hpp"

namespace gradsdf::testing {

inline Primitive sphere(Vec3 c, double r) {
    Primitive p;
    p.kind = Primitive::Kind::Sphere;
    p.center = c;
    p.radius = r;
    return p;
}

inline Primitive box(Vec3 c, Vec3 h) {
    Primitive p;
    p.kind = Primitive::Kind::Box;
    p.center = c;
    p.half = h;
    return p;
}

inline Primitive room(Vec3 c, Vec3 h) {
    Primitive p;
    p.kind = Primitive::Kind::Room;
    p.center = c;
    p.half = h;
    return p;
}

// The desk-scale acceptance scene: a 3 m closed room with three obstacles,
// strictly inside the 3.2 m root. Obstacles are pairwise disjoint and clear
// of the walls, so the min-union oracle is exact everywhere.
inline AnalyticScene room_scene() {
    AnalyticScene s;
    s.primitives.push_back(room({0, 0, 0}, {1.5, 1.5, 1.5}));
    s.primitives.push_back(sphere({0.55, -0.5, -0.85}, 0.4));
    s.primitives.push_back(box({-0.5, 0.4, -0.95}, {0.3, 0.25, 0.35}));
    s.primitives.push_back(sphere({-0.45, -0.7, 0.75}, 0.3));
    return s;
}

// Two orbits inside the room with a vertical wobble; every pose keeps at
// least 0.2 m clearance from the obstacles and walls.
inline std::vector<Vec3> room_trajectory(int poses) {
    std::vector<Vec3> out;
    constexpr double kTau = 6.283185307179586;
    for (int i = 0; i < poses; ++i) {
        const double t = double(i) / double(poses);
        out.push_back({1.15 * std::cos(kTau * 2.0 * t), 1.15 * std::sin(kTau * 2.0 * t),
                       0.5 * std::sin(kTau * 3.0 * t + 0.4)});
    }
    return out;
}

// Multi-obstacle open scene of spheres (interpolation study).
inline AnalyticScene study_scene() {
    AnalyticScene s;
    s.primitives.push_back(sphere({0.7, 0.7, 0.0}, 0.42));
    s.primitives.push_back(sphere({-0.7, 0.65, 0.15}, 0.36));
    s.primitives.push_back(sphere({-0.6, -0.7, -0.1}, 0.4));
    s.primitives.push_back(sphere({0.65, -0.65, 0.2}, 0.3));
    return s;
}

inline std::vector<Vec3> orbit_trajectory(int poses, double radius, double z_amp) {
    std::vector<Vec3> out;
    for (int i = 0; i < poses; ++i) {
        const double th = 2.0 * 3.14159265358979 * double(i) / double(poses);
        out.push_back({radius * std::cos(th), radius * std::sin(th), z_amp * std::sin(3.0 * th)});
    }
    return out;
}

// Small configuration for gradient checks and fast unit runs.
inline RunConfig small_config(uint64_t seed = 1) {
    RunConfig cfg = profile_config("desk-scale");
    cfg.octree.depth = 5;
    cfg.octree.semi_sparse_depth = 3;
    cfg.octree.leaf_resolution = 0.2;  // root side 3.2
    cfg.hash.table_size = 1u << 12;
    cfg.hash.resolutions = {8, 16, 32, 64};
    cfg.train.seed = seed;
    cfg.train.threads = 1;
    return cfg;
}

// Makes every parameter group receive gradient: the final MLP layer is
// zero-initialized by design, which blocks flow into the hidden layers and
// hash tables until trained.
inline void randomize_head(TrainState& state, uint64_t seed) {
    if (!state.net()) return;
    SplitMix64 rng(seed);
    ResidualNet* net = state.net();
    const auto& L = net->layers().back();
    for (size_t i = 0; i < size_t(L.rows) * L.cols; ++i)
        net->params()[L.w_off + i] = float(rng.uniform(-0.3, 0.3));
    for (int i = 0; i < L.rows; ++i) net->params()[L.b_off + i] = float(rng.uniform(-0.05, 0.05));
    for (size_t i = net->hash_offset(); i < net->param_count(); ++i)
        net->params()[i] = float(rng.uniform(-0.05, 0.05));
}

// Hand-constructed batch with margins away from the L1 kinks: targets are
// offset from the current prediction by at least `gap`.
inline SampleBatch kink_safe_batch(TrainState& state, int n_surface, int n_perturb, int n_free,
                                   uint64_t seed, double gap = 0.05) {
    const Aabb root = state.config().octree.root();
    const double eps = state.config().train.fd_epsilon;
    SplitMix64 rng(seed);
    auto draw = [&]() {
        return Vec3{rng.uniform(root.min.x + 2 * eps, root.max.x - 2 * eps),
                    rng.uniform(root.min.y + 2 * eps, root.max.y - 2 * eps),
                    rng.uniform(root.min.z + 2 * eps, root.max.z - 2 * eps)};
    };
    SampleBatch b;
    b.seed = seed;
    for (int i = 0; i < n_surface; ++i) b.surface.push_back(draw());
    for (int i = 0; i < n_perturb; ++i) {
        const Vec3 x = draw();
        const int8_t sign = rng.uniform() < 0.5 ? int8_t(1) : int8_t(-1);
        const double pred = state.predict(x);
        // |pred - sign * target| stays away from zero
        const double target = sign * (pred + (rng.uniform() < 0.5 ? gap : -gap) *
                                                 rng.uniform(1.0, 3.0));
        b.perturbed.push_back(x);
        b.perturbed_sign.push_back(sign);
        b.perturbed_target.push_back(std::abs(target));
    }
    for (int i = 0; i < n_free; ++i) {
        const Vec3 x = draw();
        const double pred = state.predict(x);
        b.free.push_back(x);
        b.free_target.push_back(
            std::max(0.0, pred + (rng.uniform() < 0.5 ? gap : -gap) * rng.uniform(1.0, 3.0)));
    }
    return b;
}

struct FdCheckResult {
    int checked = 0;
    int skipped_kink = 0;
    int skipped_small = 0;
    double max_rel_err = 0.0;
};

// Central-difference oracle for the parameter gradients of the configured
// loss. Candidates whose +-h interval crosses a branch boundary (detected via
// the kink signature) or whose gradient is negligibly small are skipped and
// redrawn; `per_group` parameters are verified per non-empty group.
inline FdCheckResult fd_gradient_check(TrainState& state, const SampleBatch& batch, int per_group,
                                       double h, uint64_t seed) {
    FdCheckResult result;
    // Analytic gradients at the base point.
    state.zero_gradients();
    state.compute_losses(batch, true);
    const GradBuffer& g = state.gradients();

    SplitMix64 rng(seed);
    for (int group = 0; group < 3; ++group) {
        const size_t n = state.group_size(group);
        if (n == 0) continue;
        int done = 0;
        int attempts = 0;
        while (done < per_group && attempts < per_group * 200) {
            ++attempts;
            const size_t idx = size_t(rng.below(n));
            const double ga = group == 0   ? g.tree_d[idx]
                              : group == 1 ? g.tree_g[idx]
                                           : g.net[idx];
            if (std::abs(ga) < 1e-7) {
                ++result.skipped_small;
                continue;
            }
            const double p0 = state.get_param(group, idx);
            state.set_param(group, idx, p0 + h);
            const double hi = state.get_param(group, idx);
            const double l_hi = state.compute_losses(batch, false).total();
            const uint64_t sig_hi = state.kink_signature(batch);
            state.set_param(group, idx, p0 - h);
            const double lo = state.get_param(group, idx);
            const double l_lo = state.compute_losses(batch, false).total();
            const uint64_t sig_lo = state.kink_signature(batch);
            state.set_param(group, idx, p0);
            if (sig_hi != sig_lo) {
                ++result.skipped_kink;
                continue;
            }
            const double fd = (l_hi - l_lo) / (hi - lo);
            const double rel = std::abs(fd - ga) / std::max({std::abs(fd), std::abs(ga), 1e-12});
            result.max_rel_err = std::max(result.max_rel_err, rel);
            ++done;
            ++result.checked;
        }
    }
    return result;
}

}  // namespace gradsdf::testing
