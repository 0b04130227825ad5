#pragma once

#include <array>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gradsdf/core.hpp"

namespace gradsdf {

struct TriMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<uint32_t, 3>> triangles;

    double area() const;
    Aabb bounds() const;
};

// Batched scalar field; all evaluation plumbing (trained model, analytic
// oracle) adapts to this.
using BatchField = std::function<void(std::span<const Vec3>, std::span<double>)>;

struct SdfGridSpec {
    Aabb bounds;
    double resolution = 0.0125;  // meters
};

// Standard marching cubes over field values sampled on the grid lattice
// (nodes at bounds.min + i * resolution), zero iso-surface, edge-linear
// crossing positions, vertices welded per edge. Deterministic. Throws
// EmptyMesh when the field never changes sign.
TriMesh extract_mesh(const BatchField& field, const SdfGridSpec& grid);

// Binary little-endian PLY, f32 positions.
void write_ply(const std::string& path, const TriMesh& mesh);
TriMesh read_ply(const std::string& path);

// Area-weighted uniform surface sampling (deterministic under seed).
std::vector<Vec3> sample_surface(const TriMesh& mesh, int count, uint64_t seed);

}  // namespace gradsdf
