#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "gradsdf/metrics.hpp"
#include "gradsdf/rng.hpp"
#include "gradsdf/spatial.hpp"
#include "gradsdf/study.hpp"
#include "helpers.hpp"

using namespace gradsdf;
using namespace gradsdf::testing;

namespace {

BatchField oracle_field(const AnalyticScene& scene) {
    return [scene](std::span<const Vec3> pts, std::span<double> out) {
        for (size_t i = 0; i < pts.size(); ++i) out[i] = scene_sdf(scene, pts[i]);
    };
}

TriMesh sphere_mesh(double radius, double res) {
    AnalyticScene s;
    s.primitives.push_back(sphere({0, 0, 0}, radius));
    SdfGridSpec grid{{{-radius - 0.2, -radius - 0.2, -radius - 0.2},
                      {radius + 0.2, radius + 0.2, radius + 0.2}},
                     res};
    return extract_mesh(oracle_field(s), grid);
}

}  // namespace

TEST_CASE("extract_mesh: sphere vertices stay within one cell of the surface") {
    const TriMesh mesh = sphere_mesh(1.0, 0.025);
    REQUIRE(!mesh.vertices.empty());
    for (const Vec3& v : mesh.vertices) {
        CHECK(v.norm() >= 1.0 - 0.025);
        CHECK(v.norm() <= 1.0 + 0.025);
    }
    // Mesh area within 3% of the analytic sphere area.
    CHECK(mesh.area() == doctest::Approx(4.0 * 3.14159265358979).epsilon(0.03));
}

TEST_CASE("extract_mesh: constant-sign field produces EmptyMesh") {
    const BatchField f = [](std::span<const Vec3> pts, std::span<double> out) {
        for (size_t i = 0; i < pts.size(); ++i) out[i] = 1.0;
    };
    CHECK_THROWS_AS(extract_mesh(f, {{{-1, -1, -1}, {1, 1, 1}}, 0.25}), EmptyMesh);
}

TEST_CASE("extract_mesh: emitted vertices lie near the zero level set") {
    AnalyticScene s = room_scene();
    SdfGridSpec grid{{{-1.55, -1.55, -1.55}, {1.55, 1.55, 1.55}}, 0.06};
    const TriMesh mesh = extract_mesh(oracle_field(s), grid);
    // |d| at an edge-interpolated vertex is bounded by the cell size times the
    // max gradient magnitude (1 for an SDF) with a curvature allowance.
    const double bound = grid.resolution * std::sqrt(3.0);
    for (const Vec3& v : mesh.vertices) CHECK(std::abs(scene_sdf(s, v)) <= bound);
}

TEST_CASE("ply round trip") {
    const TriMesh mesh = sphere_mesh(0.8, 0.1);
    const auto dir = std::filesystem::temp_directory_path() / "gradsdf_eval";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "m.ply").string();
    write_ply(path, mesh);
    const TriMesh back = read_ply(path);
    REQUIRE(back.vertices.size() == mesh.vertices.size());
    REQUIRE(back.triangles.size() == mesh.triangles.size());
    CHECK(back.triangles[0] == mesh.triangles[0]);
    CHECK(back.vertices[3].x == doctest::Approx(mesh.vertices[3].x).epsilon(1e-6));
}

TEST_CASE("mesh metrics: identical, translated, half-coverage, symmetry") {
    const TriMesh mesh = sphere_mesh(1.0, 0.05);

    SUBCASE("identical meshes") {
        const MeshMetrics m = mesh_metrics(mesh, mesh, 20000, 0.05, 3);
        CHECK(m.chamfer_cm == doctest::Approx(0.0));
        CHECK(m.f1_pct == doctest::Approx(100.0));
        CHECK(m.precision_pct == doctest::Approx(100.0));
        CHECK(m.recall_pct == doctest::Approx(100.0));
        CHECK(m.completion_ratio_pct == doctest::Approx(100.0));
    }

    SUBCASE("3 cm translation: chamfer tracks it, hits stay inside 5 cm") {
        TriMesh moved = mesh;
        for (Vec3& v : moved.vertices) v.x += 0.03;
        const MeshMetrics m = mesh_metrics(moved, mesh, 4000, 0.05, 4);
        CHECK(m.precision_pct > 99.0);
        CHECK(m.recall_pct > 99.0);
        CHECK(m.chamfer_cm > 1.2);
        CHECK(m.chamfer_cm < 3.2);

        // Brute-force oracle on small clouds validates the spatial index.
        const auto cr = sample_surface(moved, 800, 9);
        const auto cg = sample_surface(mesh, 800, 9);
        double acc = 0;
        for (const Vec3& p : cr) {
            double best = 1e300;
            for (const Vec3& q : cg) best = std::min(best, (p - q).norm());
            acc += best;
        }
        acc /= double(cr.size());
        PointGridIndex idx(cg, 0.05);
        double acc_fast = 0;
        for (const Vec3& p : cr) acc_fast += idx.nearest_dist(p);
        acc_fast /= double(cr.size());
        CHECK(acc_fast == doctest::Approx(acc).epsilon(1e-12));
    }

    SUBCASE("half coverage: recall halves, precision stays") {
        TriMesh half = mesh;
        half.triangles.clear();
        for (const auto& t : mesh.triangles) {
            const Vec3 c = (mesh.vertices[t[0]] + mesh.vertices[t[1]] + mesh.vertices[t[2]]) / 3.0;
            if (c.z > 0) half.triangles.push_back(t);
        }
        const MeshMetrics m = mesh_metrics(half, mesh, 20000, 0.05, 5);
        CHECK(m.precision_pct > 99.0);
        CHECK(m.recall_pct == doctest::Approx(50.0).epsilon(0.06));
    }

    SUBCASE("swapping the meshes swaps the one-sided metrics exactly") {
        TriMesh moved = mesh;
        for (Vec3& v : moved.vertices) v.y -= 0.021;
        const MeshMetrics ab = mesh_metrics(moved, mesh, 5000, 0.05, 6);
        const MeshMetrics ba = mesh_metrics(mesh, moved, 5000, 0.05, 6);
        CHECK(ab.accuracy_cm == ba.completion_cm);
        CHECK(ab.completion_cm == ba.accuracy_cm);
        CHECK(ab.precision_pct == ba.recall_pct);
        CHECK(ab.recall_pct == ba.precision_pct);
        CHECK(ab.chamfer_cm == ba.chamfer_cm);
    }
}

TEST_CASE("eval_sdf_field: oracle predictor and constant bias") {
    const AnalyticScene scene = room_scene();
    const Aabb domain{{-1.6, -1.6, -1.6}, {1.6, 1.6, 1.6}};
    EvalConfig eval;
    eval.resolution = 0.08;
    eval.padding = 0.1;
    const SdfGridSpec grid = eval_grid_for({{-1.5, -1.5, -1.5}, {1.5, 1.5, 1.5}}, domain, eval);

    SUBCASE("predictor equals the oracle") {
        FieldWithGradient model{oracle_field(scene), 0.01, domain};
        const SdfFieldMetrics m = eval_sdf_field(model, scene, grid, eval);
        CHECK(m.kept > 10000);
        CHECK(m.near_count + m.far_count == m.kept);
        CHECK(m.mae_all_cm < 1e-9);
        CHECK(m.mae_near_cm < 1e-9);
        CHECK(m.mae_far_cm < 1e-9);
        CHECK(m.grad_mae_all_rad < 0.02);  // FD of the exact field, off-kink
        CHECK(m.valid_ratio_pct == doctest::Approx(100.0));
    }

    SUBCASE("2 cm bias shifts MAE exactly, gradients untouched") {
        const BatchField biased = [&scene](std::span<const Vec3> pts, std::span<double> out) {
            for (size_t i = 0; i < pts.size(); ++i) out[i] = scene_sdf(scene, pts[i]) + 0.02;
        };
        FieldWithGradient model{biased, 0.01, domain};
        const SdfFieldMetrics m = eval_sdf_field(model, scene, grid, eval);
        CHECK(m.mae_all_cm == doctest::Approx(2.0).epsilon(1e-9));
        CHECK(m.grad_mae_all_rad < 0.02);
    }
}

TEST_CASE("slice export carries both signs through an obstacle") {
    const AnalyticScene scene = room_scene();
    const auto dir = std::filesystem::temp_directory_path() / "gradsdf_eval";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "s.nslc").string();
    // Plane through the large sphere obstacle.
    write_slice(path, oracle_field(scene), {-1.5, -1.5, 0}, -0.85, 60, 60, 0.05);

    std::ifstream is(path, std::ios::binary);
    char magic[4];
    is.read(magic, 4);
    CHECK(std::string(magic, 4) == "NSLC");
    uint32_t version, nx, ny;
    double org[3], z, res;
    is.read(reinterpret_cast<char*>(&version), 4);
    is.read(reinterpret_cast<char*>(org), 24);
    is.read(reinterpret_cast<char*>(&z), 8);
    is.read(reinterpret_cast<char*>(&nx), 4);
    is.read(reinterpret_cast<char*>(&ny), 4);
    is.read(reinterpret_cast<char*>(&res), 8);
    CHECK(version == 1);
    CHECK(nx == 60);
    CHECK(ny == 60);
    CHECK(z == -0.85);
    CHECK(res == 0.05);
    std::vector<float> vals(size_t(nx) * ny);
    is.read(reinterpret_cast<char*>(vals.data()), std::streamsize(vals.size() * 4));
    REQUIRE(bool(is));
    CHECK(*std::min_element(vals.begin(), vals.end()) < 0.0f);
    CHECK(*std::max_element(vals.begin(), vals.end()) > 0.0f);
}

TEST_CASE("prior study orderings on the multi-sphere scene") {
    const AnalyticScene scene = study_scene();
    OctreeConfig cfg;
    cfg.depth = 6;
    cfg.semi_sparse_depth = 3;
    cfg.leaf_resolution = 0.1;  // root side 0.1 * 2^5 = 3.2
    cfg.root_min = {-1.6, -1.6, -1.6};

    const auto frames =
        generate_frames(scene, orbit_trajectory(12, 1.35, 0.5), 400, 11, cfg.root());
    EvalConfig eval;
    const SdfGridSpec grid{{{-1.4, -1.4, -1.4}, {1.4, 1.4, 1.4}}, 0.07};
    const PriorStudyResult r = prior_study(scene, frames, cfg, grid, eval);

    const auto& semi_ga = r.rows[0];
    const auto& semi_tl = r.rows[1];
    const auto& sparse_ga = r.rows[2];
    const auto& sparse_tl = r.rows[3];
    CHECK(semi_ga.structure == "semi_sparse");
    CHECK(semi_ga.interp == "ga");

    // Gradient augmentation helps; the semi-sparse structure helps.
    CHECK(semi_ga.mean_err_all < semi_tl.mean_err_all);
    CHECK(semi_ga.mean_err_all < sparse_ga.mean_err_all);
    CHECK(semi_tl.mean_err_all < sparse_tl.mean_err_all);
    // Memory cost of sibling allocation.
    CHECK(semi_ga.vertices > sparse_ga.vertices);

    // Error-bound audit ran and found no violation.
    CHECK(r.bound_octants_audited > 20);
    CHECK(r.bound_violations == 0);

    const std::string csv = study_csv(r);
    CHECK(csv.find("semi_sparse,ga") != std::string::npos);
    CHECK(csv.find("sparse,tl") != std::string::npos);
}
