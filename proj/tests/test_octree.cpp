#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "gradsdf/cell_interp.hpp"
#include "gradsdf/octree.hpp"
#include "gradsdf/rng.hpp"
#include "gradsdf/scene.hpp"

using namespace gradsdf;

namespace {

OctreeConfig small_cfg(int n = 3, int m = 1, double r = 1.0, Vec3 min = {0, 0, 0}) {
    OctreeConfig cfg;
    cfg.depth = n;
    cfg.semi_sparse_depth = m;
    cfg.leaf_resolution = r;
    cfg.root_min = min;
    return cfg;
}

// Independent trilinear weights: prod over axes of (1-t) or t.
std::array<double, 8> trilinear_oracle(const Vec3& cell_min, double side, const Vec3& x) {
    const double t[3] = {(x.x - cell_min.x) / side, (x.y - cell_min.y) / side,
                         (x.z - cell_min.z) / side};
    std::array<double, 8> w{};
    for (int k = 0; k < 8; ++k) {
        double v = 1.0;
        for (int a = 0; a < 3; ++a) v *= ((k >> a) & 1) ? t[a] : 1.0 - t[a];
        w[k] = v;
    }
    return w;
}

}  // namespace

TEST_CASE("single insertion allocates sibling groups and shares vertices") {
    // N=3, M=1, r=1, root side 4. One point in leaf cell (1,2,3) at depth 2.
    SemiSparseOctree tree(small_cfg());
    CHECK(tree.vertex_count() == 8);  // root corners exist from construction

    const Vec3 p{1.5, 2.5, 3.5};
    const InsertReport rep = tree.insert_points(std::span<const Vec3>(&p, 1));

    // Depth 1 fully allocated (8 siblings), depth 2 exactly the path octant.
    CHECK(rep.octants_created == 9);
    CHECK(tree.octant_count() == 10);  // + root

    // Hand enumeration: depth-1 lattice {0,2,4}^3 = 27 keys; the leaf adds its
    // 8 corners (keys (1..2, 2..3, 3..4)), exactly one of which (2,2,4) is
    // already on the coarse lattice -> 34 total, 26 new beyond the root's 8.
    std::set<std::array<int32_t, 3>> expected;
    for (int x : {0, 2, 4})
        for (int y : {0, 2, 4})
            for (int z : {0, 2, 4}) expected.insert({x, y, z});
    for (int dx = 0; dx < 2; ++dx)
        for (int dy = 0; dy < 2; ++dy)
            for (int dz = 0; dz < 2; ++dz) expected.insert({1 + dx, 2 + dy, 3 + dz});
    CHECK(expected.size() == 34);
    CHECK(tree.vertex_count() == expected.size());
    CHECK(rep.vertices_created == expected.size() - 8);

    std::set<std::array<int32_t, 3>> got;
    for (const auto& [key, slot] : tree.parameters()) got.insert(tree.key_of_slot(slot));
    CHECK(got == expected);

    CHECK(tree.audit().empty());

    // Idempotence.
    const InsertReport again = tree.insert_points(std::span<const Vec3>(&p, 1));
    CHECK(again.empty());
    CHECK(again.dropped_points == 0);

    // Outside the root: dropped, nothing allocated.
    const Vec3 outside{9, 9, 9};
    const InsertReport drop = tree.insert_points(std::span<const Vec3>(&outside, 1));
    CHECK(drop.dropped_points == 1);
    CHECK(drop.empty());
}

TEST_CASE("sparse mode allocates only the path") {
    OctreeConfig cfg = small_cfg();
    cfg.structure = OctreeStructure::Sparse;
    SemiSparseOctree tree(cfg);
    const Vec3 p{1.5, 2.5, 3.5};
    const InsertReport rep = tree.insert_points(std::span<const Vec3>(&p, 1));
    CHECK(rep.octants_created == 2);  // one per depth below root
    CHECK(tree.audit().empty());
}

TEST_CASE("locate: fresh tree, leaf guarantee, face resolution") {
    SemiSparseOctree tree(small_cfg());
    CHECK(tree.locate({1.0, 1.0, 1.0}).depth == 0);

    const Vec3 p{1.5, 2.5, 3.5};
    tree.insert_points(std::span<const Vec3>(&p, 1));
    const OctantAddr leaf = tree.locate(p);
    CHECK(leaf.depth == 2);
    CHECK(leaf.cx == 1);
    CHECK(leaf.cy == 2);
    CHECK(leaf.cz == 3);

    // A point on a shared face belongs to the cell with the larger index.
    const std::vector<Vec3> nbrs{{0.5, 0.5, 0.5}, {1.5, 0.5, 0.5}};
    tree.insert_points(nbrs);
    const OctantAddr at = tree.locate({1.0, 0.5, 0.5});
    CHECK(at.depth == 2);
    CHECK(at.cx == 1);

    CHECK_THROWS_AS(tree.locate({5, 0, 0}), OutOfBounds);
}

TEST_CASE("semi-sparse locate depth dominates sparse locate depth") {
    OctreeConfig semi_cfg = small_cfg(4, 2, 0.5);
    OctreeConfig sparse_cfg = semi_cfg;
    sparse_cfg.structure = OctreeStructure::Sparse;
    SemiSparseOctree semi(semi_cfg), sparse(sparse_cfg);

    SplitMix64 rng(4);
    std::vector<Vec3> pts;
    for (int i = 0; i < 40; ++i)
        pts.push_back({rng.uniform(0, 4), rng.uniform(0, 4), rng.uniform(0, 4)});
    semi.insert_points(pts);
    sparse.insert_points(pts);

    for (double x = 0.25; x < 4; x += 0.5)
        for (double y = 0.25; y < 4; y += 0.5)
            for (double z = 0.25; z < 4; z += 0.5)
                CHECK(semi.locate({x, y, z}).depth >= sparse.locate({x, y, z}).depth);
}

TEST_CASE("inverse-distance weights: symmetry, vertex limit, derived value") {
    const Vec3 lo{0, 0, 0};
    auto w = inverse_distance_weights(lo, 1.0, {0.5, 0.5, 0.5});
    for (int k = 0; k < 8; ++k) CHECK(w[k] == doctest::Approx(0.125));

    w = inverse_distance_weights(lo, 1.0, {0, 0, 0});
    CHECK(w[0] == doctest::Approx(1.0));
    for (int k = 1; k < 8; ++k) CHECK(w[k] == doctest::Approx(0.0));

    // Normalized inverse-distance products equal trilinear 0.75 * 0.5 * 0.5.
    w = inverse_distance_weights(lo, 1.0, {0.25, 0.5, 0.5});
    CHECK(w[0] == doctest::Approx(0.1875));
}

TEST_CASE("weight equivalence with the trilinear oracle") {
    SplitMix64 rng(21);
    for (int trial = 0; trial < 2000; ++trial) {
        const Vec3 lo{rng.uniform(-4, 4), rng.uniform(-4, 4), rng.uniform(-4, 4)};
        const double side = rng.uniform(0.05, 3.0);
        const Vec3 x{lo.x + side * rng.uniform(), lo.y + side * rng.uniform(),
                     lo.z + side * rng.uniform()};
        const auto got = inverse_distance_weights(lo, side, x);
        const auto want = trilinear_oracle(lo, side, x);
        for (int k = 0; k < 8; ++k)
            CHECK(std::abs(got[k] - want[k]) <= 1e-9 * std::max(1.0, std::abs(want[k])));
    }
}

TEST_CASE("weights on faces and edges take the exact snapped limit") {
    const Vec3 lo{0, 0, 0};
    // On the x = 0 face the four far-x corners must get exactly zero.
    auto w = inverse_distance_weights(lo, 1.0, {0.0, 0.3, 0.7});
    const auto want = trilinear_oracle(lo, 1.0, {0.0, 0.3, 0.7});
    for (int k = 0; k < 8; ++k) CHECK(w[k] == doctest::Approx(want[k]).epsilon(1e-9));
    // On an edge only two corners survive.
    w = inverse_distance_weights(lo, 1.0, {0.0, 1.0, 0.4});
    CHECK(w[2] == doctest::Approx(0.6));  // corner (0,1,0)
    CHECK(w[6] == doctest::Approx(0.4));  // corner (0,1,1)
}

TEST_CASE("interpolation: constant and affine fields") {
    SemiSparseOctree tree(small_cfg(4, 2, 0.5));
    SplitMix64 rng(6);
    std::vector<Vec3> pts;
    for (int i = 0; i < 30; ++i)
        pts.push_back({rng.uniform(0, 4), rng.uniform(0, 4), rng.uniform(0, 4)});
    tree.insert_points(pts);

    SUBCASE("constant field") {
        for (const auto& [key, slot] : tree.parameters())
            tree.set_vertex_data(tree.key_of_slot(slot), 2.0, {0, 0, 0});
        for (int i = 0; i < 50; ++i) {
            const Vec3 x{rng.uniform(0, 4), rng.uniform(0, 4), rng.uniform(0, 4)};
            CHECK(tree.interpolate_ga(x).value == doctest::Approx(2.0));
            CHECK(tree.interpolate_tl(x).value == doctest::Approx(2.0));
        }
    }

    SUBCASE("affine field reproduced exactly by ga") {
        const Vec3 n{0.3, -0.7, 0.2};
        const double b = 0.45;
        for (const auto& [key, slot] : tree.parameters()) {
            const Vec3 pos = tree.vertex_position(slot);
            tree.set_vertex_data(tree.key_of_slot(slot), n.dot(pos) + b, n);
        }
        for (int i = 0; i < 100; ++i) {
            const Vec3 x{rng.uniform(0, 4), rng.uniform(0, 4), rng.uniform(0, 4)};
            const double want = n.dot(x) + b;
            CHECK(std::abs(tree.interpolate_ga(x).value - want) <= 1e-9);
        }
        // Trilinear is NOT exact off the vertex lattice for a non-constant
        // affine field on this tree (cross-depth boundaries exist), but it is
        // exact at vertices.
        for (const auto& [key, slot] : tree.parameters()) {
            const Vec3 pos = tree.vertex_position(slot);
            CHECK(tree.interpolate_tl(pos).value ==
                  doctest::Approx(n.dot(pos) + b).epsilon(1e-6));
        }
    }
}

TEST_CASE("trilinear at a vertex returns that vertex's value") {
    SemiSparseOctree tree(small_cfg());
    const Vec3 p{1.5, 2.5, 3.5};
    tree.insert_points(std::span<const Vec3>(&p, 1));
    SplitMix64 rng(8);
    for (const auto& [key, slot] : tree.parameters())
        tree.set_vertex_data(tree.key_of_slot(slot), rng.uniform(-1, 1),
                             {rng.uniform(-1, 1), 0, 0});
    const auto k = tree.key_of_slot(tree.parameters()[5].second);
    const Vec3 pos{double(k[0]), double(k[1]), double(k[2])};
    const double want = tree.values()[tree.parameters()[5].second];
    CHECK(tree.interpolate_tl(pos).value == doctest::Approx(want).epsilon(1e-9));
}

// Error bounds with exact vertex data on a sphere octant (cell [2, 2.8]^3):
// ga error <= 3 M L^2 / 8 with M = 1/||(2,2,2)|| = 0.2887, L = 0.8 -> 0.0693;
// tl error <= sqrt(3) L / 2 = 0.6928.
TEST_CASE("error bounds on the reference sphere octant") {
    AnalyticScene s;
    Primitive p;
    p.kind = Primitive::Kind::Sphere;
    p.center = {0, 0, 0};
    p.radius = 1.0;
    s.primitives.push_back(p);

    const Vec3 lo{2, 2, 2};
    const double L = 0.8;
    std::array<double, 8> dv;
    std::array<Vec3, 8> gv;
    for (int k = 0; k < 8; ++k) {
        const Vec3 c = cell_corner(lo, L, k);
        dv[k] = scene_sdf(s, c);
        gv[k] = *scene_sdf_gradient(s, c);
    }

    const double M = 1.0 / Vec3{2, 2, 2}.norm();
    const double bound_ga = 3.0 * M * L * L / 8.0;
    const double bound_tl = std::sqrt(3.0) * L / 2.0;
    CHECK(bound_ga == doctest::Approx(0.0693).epsilon(1e-3));
    CHECK(bound_tl == doctest::Approx(0.6928).epsilon(1e-3));

    double max_ga = 0, max_tl = 0;
    const int n = 17;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) {
                const Vec3 x{lo.x + L * i / (n - 1.0), lo.y + L * j / (n - 1.0),
                             lo.z + L * k / (n - 1.0)};
                const double d = scene_sdf(s, x);
                max_ga = std::max(max_ga, std::abs(cell_interp_ga(lo, L, x, dv, gv).value - d));
                max_tl = std::max(max_tl, std::abs(cell_interp_tl(lo, L, x, dv).value - d));
            }
    CHECK(max_ga <= bound_ga + 1e-9);
    CHECK(max_tl <= bound_tl + 1e-9);
    CHECK(max_ga < max_tl);
}

TEST_CASE("interpolation partials match finite differences") {
    SemiSparseOctree tree(small_cfg(3, 1, 1.0));
    const Vec3 p{1.5, 2.5, 3.5};
    tree.insert_points(std::span<const Vec3>(&p, 1));
    SplitMix64 rng(12);
    for (const auto& [key, slot] : tree.parameters())
        tree.set_vertex_data(tree.key_of_slot(slot), rng.uniform(-1, 1),
                             {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});

    const Vec3 x{1.3, 2.2, 3.8};
    const auto res = tree.interpolate_ga(x);
    const double h = 1e-4;
    for (int k = 0; k < 8; ++k) {
        const uint32_t slot = res.slots[k];
        const auto key = tree.key_of_slot(slot);

        // d partial
        const double d0 = tree.values()[slot];
        const Vec3 g0{tree.gradients()[3 * slot], tree.gradients()[3 * slot + 1],
                      tree.gradients()[3 * slot + 2]};
        tree.set_vertex_data(key, d0 + h, g0);
        const double up = tree.interpolate_ga(x).value;
        tree.set_vertex_data(key, d0 - h, g0);
        const double dn = tree.interpolate_ga(x).value;
        tree.set_vertex_data(key, d0, g0);
        CHECK(std::abs((up - dn) / (2 * h) - res.weights[k]) < 1e-6);

        // g partials
        for (int a = 0; a < 3; ++a) {
            Vec3 gp = g0, gm = g0;
            gp.set(a, g0[a] + h);
            gm.set(a, g0[a] - h);
            tree.set_vertex_data(key, d0, gp);
            const double u2 = tree.interpolate_ga(x).value;
            tree.set_vertex_data(key, d0, gm);
            const double d2 = tree.interpolate_ga(x).value;
            tree.set_vertex_data(key, d0, g0);
            CHECK(std::abs((u2 - d2) / (2 * h) - res.weights[k] * res.offsets[k][a]) < 1e-6);
        }
    }
}

TEST_CASE("parameters view: deterministic order, stable slots, report bookkeeping") {
    SemiSparseOctree a(small_cfg()), b(small_cfg());
    const Vec3 p{1.5, 2.5, 3.5};
    const InsertReport ra = a.insert_points(std::span<const Vec3>(&p, 1));
    b.insert_points(std::span<const Vec3>(&p, 1));

    CHECK(a.parameters().size() == 8 + ra.vertices_created);
    REQUIRE(a.parameters().size() == b.parameters().size());
    for (size_t i = 0; i < a.parameters().size(); ++i) {
        CHECK(a.parameters()[i].first == b.parameters()[i].first);
        CHECK(a.parameters()[i].second == b.parameters()[i].second);
    }
    for (size_t i = 1; i < a.parameters().size(); ++i)
        CHECK(a.parameters()[i - 1].first < a.parameters()[i].first);

    // Slots issued before further insertion stay valid afterwards.
    const auto key_before = a.key_of_slot(3);
    const Vec3 q{3.5, 0.5, 0.5};
    a.insert_points(std::span<const Vec3>(&q, 1));
    CHECK(a.key_of_slot(3) == key_before);
    CHECK(a.audit().empty());
}

TEST_CASE("vertex initialization uses distance to the inserting points") {
    SemiSparseOctree tree(small_cfg(3, 1, 1.0));
    const Vec3 p{1.5, 2.5, 3.5};
    tree.insert_points(std::span<const Vec3>(&p, 1));
    // The leaf corner at key (1,2,3) sits sqrt(0.75) from the point; its
    // initial d must be that distance (an upper bound on the true distance).
    bool found = false;
    for (const auto& [key, slot] : tree.parameters()) {
        const auto k = tree.key_of_slot(slot);
        if (k[0] == 1 && k[1] == 2 && k[2] == 3) {
            CHECK(tree.values()[slot] == doctest::Approx(std::sqrt(0.75)).epsilon(1e-9));
            const Vec3 g{tree.gradients()[3 * slot], tree.gradients()[3 * slot + 1],
                         tree.gradients()[3 * slot + 2]};
            CHECK(g.norm() == doctest::Approx(1.0).epsilon(1e-6));
            found = true;
        }
    }
    CHECK(found);
}
