#include "gradsdf/residual.hpp"

#include <cmath>
#include <cstring>

#include "gradsdf/kernels.hpp"
#include "gradsdf/rng.hpp"

namespace gradsdf {

void HashGridConfig::validate() const {
    if (levels < 1) throw ConfigError("hash grid needs at least one level");
    if (features < 1) throw ConfigError("hash grid needs at least one feature per level");
    if (int(resolutions.size()) != levels)
        throw ConfigError("hash grid needs one resolution per level");
    for (size_t i = 0; i < resolutions.size(); ++i) {
        if (resolutions[i] < 1) throw ConfigError("hash grid resolutions must be positive");
        if (i > 0 && resolutions[i] <= resolutions[i - 1])
            throw ConfigError("hash grid resolutions must be strictly increasing");
    }
    if (table_size == 0 || (table_size & (table_size - 1)) != 0)
        throw ConfigError("hash table size must be a power of two");
}

void MlpConfig::validate() const {
    if (hidden_layers < 1 || hidden_width < 1) throw ConfigError("mlp needs hidden layers");
    if (!(leaky_slope >= 0.0)) throw ConfigError("mlp leaky slope must be >= 0");
}

ResidualNet::ResidualNet(const HashGridConfig& hash, const MlpConfig& mlp, const Aabb& root,
                         uint64_t seed)
    : hash_(hash), mlp_(mlp), root_(root) {
    hash_.validate();
    mlp_.validate();

    const int in = feature_dim();
    size_t off = 0;
    auto add_layer = [&](int rows, int cols) {
        layers_.push_back({rows, cols, off, off + size_t(rows) * cols});
        off += size_t(rows) * cols + rows;
    };
    add_layer(mlp_.hidden_width, in);
    for (int i = 1; i < mlp_.hidden_layers; ++i) add_layer(mlp_.hidden_width, mlp_.hidden_width);
    add_layer(1, mlp_.hidden_width);
    hash_off_ = off;
    off += size_t(hash_.levels) * hash_.table_size * hash_.features;
    params_.assign(off, 0.0f);

    // Hidden layers: uniform +-sqrt(6/fan_in); output layer stays zero so the
    // residual is exactly zero at step 0. Hash tables: small uniform noise.
    SplitMix64 rng(seed);
    for (size_t li = 0; li + 1 < layers_.size(); ++li) {
        const Layer& L = layers_[li];
        const double bound = std::sqrt(6.0 / double(L.cols));
        for (size_t i = 0; i < size_t(L.rows) * L.cols; ++i)
            params_[L.w_off + i] = float(rng.uniform(-bound, bound));
        // biases stay zero
    }
    for (size_t i = hash_off_; i < params_.size(); ++i)
        params_[i] = float(rng.uniform(-1e-4, 1e-4));
}

void ResidualNet::encode(const Vec3& x, std::span<double> features, uint32_t* corner_idx,
                         double* corner_w) const {
    if (!root_.contains(x)) throw OutOfBounds("encode: point outside root");
    const int F = hash_.features;
    const Vec3 ext = root_.extent();
    const Vec3 u{(x.x - root_.min.x) / ext.x, (x.y - root_.min.y) / ext.y,
                 (x.z - root_.min.z) / ext.z};
    for (int l = 0; l < hash_.levels; ++l) {
        const int R = hash_.resolutions[l];
        double s[3] = {u.x * R, u.y * R, u.z * R};
        int32_t cell[3];
        double t[3];
        for (int a = 0; a < 3; ++a) {
            cell[a] = std::min(int32_t(R - 1), std::max(int32_t(0), int32_t(std::floor(s[a]))));
            t[a] = s[a] - double(cell[a]);
        }
        const uint32_t base = uint32_t(l) * hash_.table_size;
        for (int f = 0; f < F; ++f) features[size_t(l) * F + f] = 0.0;
        for (int k = 0; k < 8; ++k) {
            const uint32_t ix = uint32_t(cell[0] + (k & 1));
            const uint32_t iy = uint32_t(cell[1] + ((k >> 1) & 1));
            const uint32_t iz = uint32_t(cell[2] + ((k >> 2) & 1));
            const uint32_t h =
                (ix * 1u ^ iy * 2654435761u ^ iz * 805459861u) & (hash_.table_size - 1);
            const double w = ((k & 1) ? t[0] : 1.0 - t[0]) * (((k >> 1) & 1) ? t[1] : 1.0 - t[1]) *
                             (((k >> 2) & 1) ? t[2] : 1.0 - t[2]);
            const uint32_t entry = base + h;
            if (corner_idx) corner_idx[l * 8 + k] = entry;
            if (corner_w) corner_w[l * 8 + k] = w;
            const float* tab = params_.data() + hash_off_ + size_t(entry) * F;
            for (int f = 0; f < F; ++f) features[size_t(l) * F + f] += w * double(tab[f]);
        }
    }
}

double ResidualNet::decode(std::span<const double> features) const {
    if (int(features.size()) != feature_dim()) throw ShapeMismatch("decode: bad feature length");
    NetWorkspace ws;
    const int W = mlp_.hidden_width;
    const int H = mlp_.hidden_layers;
    ws.z.assign(size_t(H) * W, 0.0);
    ws.a.assign(size_t(H) * W, 0.0);
    std::vector<double> out(1);
    const auto& ops = kernels::active();
    const double* input = features.data();
    for (int li = 0; li < H; ++li) {
        const Layer& L = layers_[li];
        ops.layer_forward(params_.data() + L.w_off, params_.data() + L.b_off, input,
                          ws.z.data() + size_t(li) * W, L.rows, L.cols, 1);
        ops.leaky_relu(ws.z.data() + size_t(li) * W, ws.a.data() + size_t(li) * W, W,
                       mlp_.leaky_slope);
        input = ws.a.data() + size_t(li) * W;
    }
    const Layer& Lo = layers_.back();
    ops.layer_forward(params_.data() + Lo.w_off, params_.data() + Lo.b_off, input, out.data(), 1,
                      Lo.cols, 1);
    return out[0];
}

void ResidualNet::forward(std::span<const Vec3> points, std::span<double> out,
                          NetWorkspace& ws) const {
    const int B = int(points.size());
    const int in = feature_dim();
    const int W = mlp_.hidden_width;
    const int H = mlp_.hidden_layers;
    ws.batch = B;
    ws.feats.assign(size_t(in) * B, 0.0);
    ws.z.resize(size_t(H) * W * B);
    ws.a.resize(size_t(H) * W * B);
    ws.corner_idx.resize(size_t(B) * hash_.levels * 8);
    ws.corner_w.resize(size_t(B) * hash_.levels * 8);

    std::vector<double> fcol(in);
    for (int b = 0; b < B; ++b) {
        encode(points[b], fcol, ws.corner_idx.data() + size_t(b) * hash_.levels * 8,
               ws.corner_w.data() + size_t(b) * hash_.levels * 8);
        for (int f = 0; f < in; ++f) ws.feats[size_t(f) * B + b] = fcol[f];
    }

    const auto& ops = kernels::active();
    const double* input = ws.feats.data();
    for (int li = 0; li < H; ++li) {
        const Layer& L = layers_[li];
        double* z = ws.z.data() + size_t(li) * W * B;
        double* a = ws.a.data() + size_t(li) * W * B;
        ops.layer_forward(params_.data() + L.w_off, params_.data() + L.b_off, input, z, L.rows,
                          L.cols, B);
        ops.leaky_relu(z, a, W * B, mlp_.leaky_slope);
        input = a;
    }
    const Layer& Lo = layers_.back();
    ops.layer_forward(params_.data() + Lo.w_off, params_.data() + Lo.b_off, input, out.data(), 1,
                      Lo.cols, B);
}

void ResidualNet::backward(std::span<const double> upstream, const NetWorkspace& ws,
                           std::span<double> grad) const {
    if (grad.size() != params_.size()) throw ShapeMismatch("backward: grad buffer size mismatch");
    if (int(upstream.size()) != ws.batch) throw ShapeMismatch("backward: upstream size mismatch");
    const int B = ws.batch;
    const int in = feature_dim();
    const int W = mlp_.hidden_width;
    const int H = mlp_.hidden_layers;
    const auto& ops = kernels::active();

    std::vector<double> dy(upstream.begin(), upstream.end());
    std::vector<double> dx(size_t(std::max(W, in)) * B);

    // Output layer.
    const Layer& Lo = layers_.back();
    const double* a_last = ws.a.data() + size_t(H - 1) * W * B;
    ops.layer_backward_param(dy.data(), a_last, grad.data() + Lo.w_off, grad.data() + Lo.b_off, 1,
                             Lo.cols, B);
    ops.layer_backward_data(params_.data() + Lo.w_off, dy.data(), dx.data(), 1, Lo.cols, B);

    // Hidden layers, last to first.
    for (int li = H - 1; li >= 0; --li) {
        const Layer& L = layers_[li];
        const double* z = ws.z.data() + size_t(li) * W * B;
        dy.resize(size_t(W) * B);
        ops.leaky_relu_grad(z, dx.data(), dy.data(), W * B, mlp_.leaky_slope);
        const double* input = li == 0 ? ws.feats.data() : ws.a.data() + size_t(li - 1) * W * B;
        ops.layer_backward_param(dy.data(), input, grad.data() + L.w_off, grad.data() + L.b_off,
                                 L.rows, L.cols, B);
        ops.layer_backward_data(params_.data() + L.w_off, dy.data(), dx.data(), L.rows, L.cols, B);
    }

    // dx now holds feature gradients [in][B]; scatter through the footprints.
    const int F = hash_.features;
    double* hgrad = grad.data() + hash_off_;
    for (int b = 0; b < B; ++b) {
        const uint32_t* ci = ws.corner_idx.data() + size_t(b) * hash_.levels * 8;
        const double* cw = ws.corner_w.data() + size_t(b) * hash_.levels * 8;
        for (int l = 0; l < hash_.levels; ++l) {
            for (int k = 0; k < 8; ++k) {
                const double w = cw[l * 8 + k];
                if (w == 0.0) continue;
                double* slot = hgrad + size_t(ci[l * 8 + k]) * F;
                for (int f = 0; f < F; ++f)
                    slot[f] += w * dx[size_t(l * F + f) * B + b];
            }
        }
    }
}

}  // namespace gradsdf
