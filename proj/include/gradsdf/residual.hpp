#pragma once

#include <span>
#include <vector>

#include "gradsdf/core.hpp"

namespace gradsdf {

struct HashGridConfig {
    int levels = 4;
    int features = 2;
    std::vector<int> resolutions = {16, 32, 64, 128};  // cells per root side, coarse to fine
    uint32_t table_size = 1u << 19;                    // entries per level, power of two
    void validate() const;
};

struct MlpConfig {
    int hidden_layers = 5;
    int hidden_width = 64;
    double leaky_slope = 0.01;
    void validate() const;
};

struct ShapeMismatch : std::runtime_error {
    explicit ShapeMismatch(const std::string& what) : std::runtime_error(what) {}
};

// Scratch for one forward/backward chunk. Reused across chunks; safe to use
// one instance per thread.
struct NetWorkspace {
    int batch = 0;
    std::vector<double> feats;        // [levels*F][batch]
    std::vector<double> z;            // hidden preactivations, [layer][width][batch]
    std::vector<double> a;            // hidden activations,   [layer][width][batch]
    std::vector<uint32_t> corner_idx; // [batch][levels][8], global table entry index
    std::vector<double> corner_w;     // [batch][levels][8]
};

// Implicit SDF residual: multi-resolution hash-grid encoder feeding a fixed
// MLP decoder. Parameters are f32 in one flat array (MLP layers first, then
// the hash tables); all forward/backward arithmetic is f64. The final MLP
// layer is zero-initialized so the residual starts identically zero.
class ResidualNet {
   public:
    ResidualNet(const HashGridConfig& hash, const MlpConfig& mlp, const Aabb& root,
                uint64_t seed);

    const HashGridConfig& hash_config() const { return hash_; }
    const MlpConfig& mlp_config() const { return mlp_; }
    const Aabb& root() const { return root_; }

    size_t param_count() const { return params_.size(); }
    std::span<float> params() { return params_; }
    std::span<const float> params() const { return params_; }

    struct Layer {
        int rows, cols;
        size_t w_off, b_off;
    };
    std::span<const Layer> layers() const { return layers_; }
    size_t hash_offset() const { return hash_off_; }  // start of the tables in params()

    int feature_dim() const { return hash_.levels * hash_.features; }

    // Per-level trilinear interpolation of hashed corner features,
    // concatenated coarse to fine. Corner (i,j,k) hashes to
    // (i*1 xor j*2654435761 xor k*805459861) mod table_size. Footprint
    // arrays, when given, receive levels*8 entries each.
    void encode(const Vec3& x, std::span<double> features, uint32_t* corner_idx = nullptr,
                double* corner_w = nullptr) const;

    // MLP decoder alone (testing seam; forward() fuses encode+decode).
    double decode(std::span<const double> features) const;

    void forward(std::span<const Vec3> points, std::span<double> out, NetWorkspace& ws) const;

    // Accumulates d(sum_b upstream[b] * out[b]) / d(params) into `grad`
    // (size param_count()). Requires the workspace of the matching forward.
    void backward(std::span<const double> upstream, const NetWorkspace& ws,
                  std::span<double> grad) const;

   private:
    HashGridConfig hash_;
    MlpConfig mlp_;
    Aabb root_;
    std::vector<float> params_;
    std::vector<Layer> layers_;
    size_t hash_off_ = 0;
};

}  // namespace gradsdf
