#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "gradsdf/residual.hpp"
#include "gradsdf/rng.hpp"

using namespace gradsdf;

namespace {

const Aabb kRoot{{-1.6, -1.6, -1.6}, {1.6, 1.6, 1.6}};

HashGridConfig small_hash() {
    HashGridConfig h;
    h.levels = 4;
    h.features = 2;
    h.resolutions = {4, 8, 16, 32};
    h.table_size = 1u << 10;
    return h;
}

MlpConfig small_mlp() {
    MlpConfig m;
    m.hidden_layers = 2;
    m.hidden_width = 16;
    return m;
}

// Independent scalar re-implementation of the per-level interpolation.
std::vector<double> encode_reference(const ResidualNet& net, const Vec3& x) {
    const auto& hc = net.hash_config();
    const Aabb& root = net.root();
    const Vec3 ext = root.extent();
    std::vector<double> out(size_t(hc.levels) * hc.features, 0.0);
    for (int l = 0; l < hc.levels; ++l) {
        const int R = hc.resolutions[l];
        const double sx = (x.x - root.min.x) / ext.x * R;
        const double sy = (x.y - root.min.y) / ext.y * R;
        const double sz = (x.z - root.min.z) / ext.z * R;
        const int ix = std::min(R - 1, std::max(0, int(std::floor(sx))));
        const int iy = std::min(R - 1, std::max(0, int(std::floor(sy))));
        const int iz = std::min(R - 1, std::max(0, int(std::floor(sz))));
        const double tx = sx - ix, ty = sy - iy, tz = sz - iz;
        for (int dz = 0; dz < 2; ++dz)
            for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx) {
                    const uint32_t h = (uint32_t(ix + dx) * 1u ^ uint32_t(iy + dy) * 2654435761u ^
                                        uint32_t(iz + dz) * 805459861u) &
                                       (hc.table_size - 1);
                    const double w = (dx ? tx : 1 - tx) * (dy ? ty : 1 - ty) * (dz ? tz : 1 - tz);
                    const float* entry = net.params().data() + net.hash_offset() +
                                         (size_t(l) * hc.table_size + h) * hc.features;
                    for (int f = 0; f < hc.features; ++f)
                        out[size_t(l) * hc.features + f] += w * double(entry[f]);
                }
    }
    return out;
}

}  // namespace

TEST_CASE("encode: zero tables give zero features") {
    ResidualNet net(small_hash(), small_mlp(), kRoot, 1);
    for (size_t i = net.hash_offset(); i < net.param_count(); ++i) net.params()[i] = 0.0f;
    std::vector<double> f(net.feature_dim());
    net.encode({0.3, -0.2, 1.1}, f);
    for (double v : f) CHECK(v == 0.0);
}

TEST_CASE("encode: exact corner recovers that corner's table entry") {
    ResidualNet net(small_hash(), small_mlp(), kRoot, 2);
    SplitMix64 rng(3);
    for (size_t i = net.hash_offset(); i < net.param_count(); ++i)
        net.params()[i] = float(rng.uniform(-1, 1));

    const auto& hc = net.hash_config();
    const int l = 2;
    const int R = hc.resolutions[l];
    const int ix = 5, iy = 9, iz = 3;
    const Vec3 ext = kRoot.extent();
    const Vec3 x{kRoot.min.x + ext.x * ix / R, kRoot.min.y + ext.y * iy / R,
                 kRoot.min.z + ext.z * iz / R};
    std::vector<double> f(net.feature_dim());
    net.encode(x, f);
    const uint32_t h =
        (uint32_t(ix) * 1u ^ uint32_t(iy) * 2654435761u ^ uint32_t(iz) * 805459861u) &
        (hc.table_size - 1);
    const float* entry =
        net.params().data() + net.hash_offset() + (size_t(l) * hc.table_size + h) * hc.features;
    for (int ff = 0; ff < hc.features; ++ff)
        CHECK(f[size_t(l) * hc.features + ff] == doctest::Approx(double(entry[ff])).epsilon(1e-9));
}

TEST_CASE("encode matches the scalar reference everywhere") {
    ResidualNet net(small_hash(), small_mlp(), kRoot, 4);
    SplitMix64 rng(5);
    for (size_t i = net.hash_offset(); i < net.param_count(); ++i)
        net.params()[i] = float(rng.uniform(-1, 1));
    std::vector<double> f(net.feature_dim());
    for (int trial = 0; trial < 500; ++trial) {
        const Vec3 x{rng.uniform(-1.6, 1.6), rng.uniform(-1.6, 1.6), rng.uniform(-1.6, 1.6)};
        net.encode(x, f);
        const auto ref = encode_reference(net, x);
        for (size_t i = 0; i < ref.size(); ++i)
            CHECK(f[i] == doctest::Approx(ref[i]).epsilon(1e-12));
    }
    CHECK_THROWS_AS(net.encode({2.0, 0, 0}, f), OutOfBounds);
}

TEST_CASE("decode: zero-initialized head maps everything to zero") {
    ResidualNet net(small_hash(), small_mlp(), kRoot, 7);
    SplitMix64 rng(8);
    std::vector<double> f(net.feature_dim());
    for (auto& v : f) v = rng.uniform(-2, 2);
    CHECK(net.decode(f) == 0.0);
}

TEST_CASE("decode: identity construction sums positive inputs") {
    HashGridConfig h = small_hash();  // feature_dim = 8
    MlpConfig m;
    m.hidden_layers = 1;
    m.hidden_width = 8;
    ResidualNet net(h, m, kRoot, 1);
    // Hidden layer = identity, output layer = all ones; LeakyReLU is the
    // identity on the positive orthant.
    const auto& L0 = net.layers()[0];
    for (int r = 0; r < L0.rows; ++r)
        for (int c = 0; c < L0.cols; ++c)
            net.params()[L0.w_off + size_t(r) * L0.cols + c] = r == c ? 1.0f : 0.0f;
    for (int r = 0; r < L0.rows; ++r) net.params()[L0.b_off + r] = 0.0f;
    const auto& L1 = net.layers()[1];
    for (int c = 0; c < L1.cols; ++c) net.params()[L1.w_off + c] = 1.0f;
    net.params()[L1.b_off] = 0.0f;

    std::vector<double> f = {0.3, 0.7, 0.1, 0.2, 0.5, 0.11, 0.13, 0.4};
    double sum = 0;
    for (double v : f) sum += v;
    CHECK(net.decode(f) == doctest::Approx(sum).epsilon(1e-12));

    CHECK_THROWS_AS(net.decode(std::vector<double>(3)), ShapeMismatch);
}

TEST_CASE("same seed gives bitwise-identical nets and outputs") {
    ResidualNet a(small_hash(), small_mlp(), kRoot, 42);
    ResidualNet b(small_hash(), small_mlp(), kRoot, 42);
    REQUIRE(a.param_count() == b.param_count());
    for (size_t i = 0; i < a.param_count(); ++i) REQUIRE(a.params()[i] == b.params()[i]);

    NetWorkspace wa, wb;
    std::vector<Vec3> pts = {{0.1, 0.2, 0.3}, {-1.0, 0.5, 0.9}};
    std::vector<double> oa(2), ob(2);
    a.forward(pts, oa, wa);
    b.forward(pts, ob, wb);
    CHECK(oa[0] == ob[0]);
    CHECK(oa[1] == ob[1]);
}

TEST_CASE("backward: zero upstream, exact doubling, locality") {
    ResidualNet net(small_hash(), small_mlp(), kRoot, 9);
    SplitMix64 rng(10);
    const auto& Lo = net.layers().back();
    for (size_t i = 0; i < size_t(Lo.rows) * Lo.cols; ++i)
        net.params()[Lo.w_off + i] = float(rng.uniform(-0.5, 0.5));

    std::vector<Vec3> pts = {{0.4, -0.3, 0.2}, {1.1, 0.9, -0.8}};
    std::vector<double> out(2);
    NetWorkspace ws;
    net.forward(pts, out, ws);

    std::vector<double> grad(net.param_count(), 0.0);
    net.backward(std::vector<double>{0.0, 0.0}, ws, grad);
    for (double g : grad) CHECK(g == 0.0);

    net.backward(std::vector<double>{1.0, -2.0}, ws, grad);
    std::vector<double> grad2 = grad;
    net.backward(std::vector<double>{1.0, -2.0}, ws, grad2);
    for (size_t i = 0; i < grad.size(); ++i) CHECK(grad2[i] == doctest::Approx(2.0 * grad[i]));

    // Locality: a table entry outside every footprint cannot change outputs.
    size_t untouched = net.param_count();
    for (size_t e = net.hash_offset(); e < net.param_count(); ++e) {
        if (grad[e] == 0.0) {
            untouched = e;
            break;
        }
    }
    REQUIRE(untouched < net.param_count());
    const float saved = net.params()[untouched];
    net.params()[untouched] = saved + 10.0f;
    std::vector<double> out2(2);
    NetWorkspace ws2;
    net.forward(pts, out2, ws2);
    CHECK(out2[0] == out[0]);
    CHECK(out2[1] == out[1]);
    net.params()[untouched] = saved;
}

TEST_CASE("backward gradients match central finite differences") {
    ResidualNet net(small_hash(), small_mlp(), kRoot, 11);
    SplitMix64 rng(12);
    const auto& Lo = net.layers().back();
    for (size_t i = 0; i < size_t(Lo.rows) * Lo.cols; ++i)
        net.params()[Lo.w_off + i] = float(rng.uniform(-0.5, 0.5));
    for (size_t i = net.hash_offset(); i < net.param_count(); ++i)
        net.params()[i] = float(rng.uniform(-0.3, 0.3));

    std::vector<Vec3> pts;
    std::vector<double> upstream;
    for (int i = 0; i < 5; ++i) {
        pts.push_back({rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5)});
        upstream.push_back(rng.uniform(-1, 1));
    }
    std::vector<double> out(pts.size());
    NetWorkspace ws;
    net.forward(pts, out, ws);
    std::vector<double> grad(net.param_count(), 0.0);
    net.backward(upstream, ws, grad);

    auto loss_and_signs = [&](std::vector<bool>* signs) {
        NetWorkspace w;
        std::vector<double> o(pts.size());
        net.forward(pts, o, w);
        if (signs) {
            signs->clear();
            for (double z : w.z) signs->push_back(z > 0);
        }
        double s = 0;
        for (size_t i = 0; i < o.size(); ++i) s += upstream[i] * o[i];
        return s;
    };

    const double h = 1e-3;
    int checked = 0, attempts = 0;
    std::vector<bool> signs_hi, signs_lo;
    while (checked < 200 && attempts < 5000) {
        ++attempts;
        const size_t idx = size_t(rng.below(net.param_count()));
        if (std::abs(grad[idx]) < 1e-7) continue;
        const float p0 = net.params()[idx];
        net.params()[idx] = float(double(p0) + h);
        const double hi_val = double(net.params()[idx]);
        const double hi = loss_and_signs(&signs_hi);
        net.params()[idx] = float(double(p0) - h);
        const double lo_val = double(net.params()[idx]);
        const double lo = loss_and_signs(&signs_lo);
        net.params()[idx] = p0;
        if (signs_hi != signs_lo) continue;  // kink inside the interval
        const double fd = (hi - lo) / (hi_val - lo_val);
        const double rel =
            std::abs(fd - grad[idx]) / std::max({std::abs(fd), std::abs(grad[idx]), 1e-12});
        CHECK(rel < 1e-4);
        ++checked;
    }
    CHECK(checked == 200);
}
