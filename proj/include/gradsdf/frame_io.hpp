#pragma once

#include <string>
#include <vector>

#include "gradsdf/scene.hpp"

namespace gradsdf {

// Frame file, little-endian:
//   magic "NSDF", u32 version=1, f64[3] origin, u32 count, count x f32[3] points.
// A plain-text manifest lists one frame file per line in stream order.
void write_frame(const std::string& path, const Frame& frame);
Frame read_frame(const std::string& path, uint32_t id);

void write_manifest(const std::string& path, const std::vector<std::string>& frame_files);
// Returns frame paths resolved relative to the manifest's directory.
std::vector<std::string> read_manifest(const std::string& path);

}  // namespace gradsdf
