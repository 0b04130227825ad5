#pragma once

#include <functional>
#include <memory>
#include <string>

#include "gradsdf/training.hpp"

namespace gradsdf {

// Checkpoint file: magic "NSCK", u32 version, then length-prefixed sections
// (u8 name length, name, u64 payload bytes), little-endian, f32 parameters:
//   META    canonical config text
//   TREE    octant cells per depth (sorted)
//   OCTREE  octree config, structure mode, vertices (key-sorted): i32[3] key,
//           f32 d, f32[3] g
//   HASH    per level: u32 table size, u32 features, f32 entries
//   MLP     per layer: u32 rows, u32 cols, f32 row-major weights, f32 biases
//   OPT     Adam moments (f64) and the global step counter
//   RUN     frames processed and keyframe ids
// Prediction-only consumers (mesh, slice, eval) stop caring after MLP; OPT and
// RUN make split runs resume bit-exactly.
void save_checkpoint(const std::string& path, const TrainState& state);

struct LoadedCheckpoint {
    RunConfig config;
    std::unique_ptr<TrainState> state;
    uint32_t frames_processed = 0;
    std::vector<uint32_t> keyframe_ids;
    bool has_optimizer_state = false;
};

// Restores config, octree, residual net, and (when present) optimizer state
// and counters. Keyframes need the original frames: call restore_keyframes
// with a frame loader before resuming training.
LoadedCheckpoint load_checkpoint(const std::string& path);

void restore_keyframes(TrainState& state, const std::vector<uint32_t>& keyframe_ids,
                       const std::function<Frame(uint32_t)>& load_frame);

}  // namespace gradsdf
