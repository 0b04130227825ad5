#include "gradsdf/study.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_map>

#include "gradsdf/octree.hpp"

namespace gradsdf {

uint64_t set_oracle_vertex_data(SemiSparseOctree& tree, const AnalyticScene& scene) {
    uint64_t medial = 0;
    for (const auto& [key, slot] : tree.parameters()) {
        (void)key;
        const Vec3 pos = tree.vertex_position(slot);
        const double d = scene_sdf(scene, pos);
        const auto g = scene_sdf_gradient(scene, pos);
        if (!g) ++medial;
        tree.set_vertex_data(tree.key_of_slot(slot), d, g.value_or(Vec3{0, 0, 0}));
    }
    return medial;
}

namespace {

size_t argmin_primitive(const AnalyticScene& scene, const Vec3& x) {
    size_t best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < scene.primitives.size(); ++i) {
        const double d = primitive_sdf(scene.primitives[i], x);
        if (d < bd) {
            bd = d;
            best = i;
        }
    }
    return best;
}

double dist_point_to_box(const Vec3& p, const Vec3& lo, const Vec3& hi) {
    const double dx = std::max({lo.x - p.x, 0.0, p.x - hi.x});
    const double dy = std::max({lo.y - p.y, 0.0, p.y - hi.y});
    const double dz = std::max({lo.z - p.z, 0.0, p.z - hi.z});
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

double max_dist_point_to_box(const Vec3& p, const Vec3& lo, const Vec3& hi) {
    const double dx = std::max(std::abs(lo.x - p.x), std::abs(hi.x - p.x));
    const double dy = std::max(std::abs(lo.y - p.y), std::abs(hi.y - p.y));
    const double dz = std::max(std::abs(lo.z - p.z), std::abs(hi.z - p.z));
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

// Interval bound: the whole box (vertices included) projects onto primitive
// `idx` iff the largest distance to it stays below the smallest distance to
// every other primitive. Sphere-only scenes make both sides analytic.
bool box_owned_by_sphere(const AnalyticScene& scene, size_t idx, const Vec3& lo, const Vec3& hi) {
    const Primitive& own = scene.primitives[idx];
    if (own.kind != Primitive::Kind::Sphere) return false;
    const double own_max = max_dist_point_to_box(own.center, lo, hi) - own.radius;
    for (size_t j = 0; j < scene.primitives.size(); ++j) {
        if (j == idx) continue;
        const Primitive& other = scene.primitives[j];
        if (other.kind != Primitive::Kind::Sphere) return false;
        const double other_min = dist_point_to_box(other.center, lo, hi) - other.radius;
        if (own_max >= other_min) return false;
    }
    return true;
}

struct OctantStats {
    double max_err_ga = 0.0;
    int64_t prim = -1;  // -2 when mixed
    uint64_t samples = 0;
};

struct Accum {
    double sum_all = 0, max_all = 0;
    double sum_near = 0, max_near = 0;
    double sum_far = 0, max_far = 0;
    uint64_t n_all = 0, n_near = 0, n_far = 0;

    void add(double err, bool near) {
        sum_all += err;
        max_all = std::max(max_all, err);
        ++n_all;
        if (near) {
            sum_near += err;
            max_near = std::max(max_near, err);
            ++n_near;
        } else {
            sum_far += err;
            max_far = std::max(max_far, err);
            ++n_far;
        }
    }
    void fill(PriorStudyRow& row) const {
        row.mean_err_all = n_all ? sum_all / double(n_all) : 0.0;
        row.max_err_all = max_all;
        row.mean_err_near = n_near ? sum_near / double(n_near) : 0.0;
        row.max_err_near = max_near;
        row.mean_err_far = n_far ? sum_far / double(n_far) : 0.0;
        row.max_err_far = max_far;
    }
};

}  // namespace

PriorStudyResult prior_study(const AnalyticScene& scene, const std::vector<Frame>& frames,
                             const OctreeConfig& base, const SdfGridSpec& grid,
                             const EvalConfig& eval) {
    PriorStudyResult out;

    OctreeConfig semi_cfg = base;
    semi_cfg.structure = OctreeStructure::SemiSparse;
    OctreeConfig sparse_cfg = base;
    sparse_cfg.structure = OctreeStructure::Sparse;
    SemiSparseOctree semi(semi_cfg), sparse(sparse_cfg);
    for (const Frame& f : frames) {
        semi.insert_points(f.points);
        sparse.insert_points(f.points);
    }
    out.medial_vertices = set_oracle_vertex_data(semi, scene);
    set_oracle_vertex_data(sparse, scene);

    const Aabb box = grid.bounds.intersect(base.root());
    const double res = grid.resolution;
    const Vec3 ext = box.extent();
    const int nx = std::max(1, int(std::floor(ext.x / res)));
    const int ny = std::max(1, int(std::floor(ext.y / res)));
    const int nz = std::max(1, int(std::floor(ext.z / res)));

    Accum acc[4];  // semi-ga, semi-tl, sparse-ga, sparse-tl
    std::unordered_map<uint64_t, OctantStats> per_octant;  // semi tree, ga errors
    const double leaf_r = base.leaf_resolution;

    for (int k = 0; k < nz; ++k) {
        for (int j = 0; j < ny; ++j) {
            for (int i = 0; i < nx; ++i) {
                const Vec3 p{box.min.x + (i + 0.5) * res, box.min.y + (j + 0.5) * res,
                             box.min.z + (k + 0.5) * res};
                const double d = scene_sdf(scene, p);
                const bool near = d <= eval.near_max;

                const auto semi_ga = semi.interpolate_ga(p);
                const double e_ga = std::abs(semi_ga.value - d);
                acc[0].add(e_ga, near);
                acc[1].add(std::abs(semi.interpolate_tl(p).value - d), near);
                acc[2].add(std::abs(sparse.interpolate_ga(p).value - d), near);
                acc[3].add(std::abs(sparse.interpolate_tl(p).value - d), near);

                const uint64_t okey =
                    (uint64_t(semi_ga.octant.depth) << 58) |
                    pack_key(semi_ga.octant.cx, semi_ga.octant.cy, semi_ga.octant.cz);
                OctantStats& st = per_octant[okey];
                st.max_err_ga = std::max(st.max_err_ga, e_ga);
                const int64_t prim = int64_t(argmin_primitive(scene, p));
                if (st.samples == 0)
                    st.prim = prim;
                else if (st.prim != prim)
                    st.prim = -2;
                ++st.samples;
            }
        }
    }

    const char* names[4][2] = {{"semi_sparse", "ga"},
                               {"semi_sparse", "tl"},
                               {"sparse", "ga"},
                               {"sparse", "tl"}};
    for (int r = 0; r < 4; ++r) {
        out.rows[r].structure = names[r][0];
        out.rows[r].interp = names[r][1];
        acc[r].fill(out.rows[r]);
        const bool is_semi = r < 2;
        out.rows[r].vertices = is_semi ? semi.vertex_count() : sparse.vertex_count();
        out.rows[r].octants = is_semi ? semi.octant_count() : sparse.octant_count();
    }

    // Error-bound audit: octants that lie entirely (vertices included) in a
    // single sphere's nearest-projection region, with the center outside the
    // octant. There the Hessian norm is bounded by M = 1 / dist(center,
    // octant) and the sampled ga error must stay below 3 M L^2 / 8.
    for (const auto& [okey, st] : per_octant) {
        if (st.prim < 0 || st.samples < 4) continue;
        const int depth = int(okey >> 58);
        const auto cell = unpack_key(okey & ((uint64_t(1) << 58) - 1));
        const double side = leaf_r * double(1 << (base.depth - 1 - depth));
        const Vec3 lo = base.root_min + Vec3{side * cell[0], side * cell[1], side * cell[2]};
        const Vec3 hi = lo + Vec3{side, side, side};
        if (!box_owned_by_sphere(scene, size_t(st.prim), lo, hi)) continue;
        const Primitive& prim = scene.primitives[size_t(st.prim)];
        const double dist = dist_point_to_box(prim.center, lo, hi);
        if (dist < 1e-9) continue;  // center inside: Hessian unbounded
        const double bound = 3.0 * (1.0 / dist) * side * side / 8.0;
        ++out.bound_octants_audited;
        out.bound_max_ratio = std::max(out.bound_max_ratio, st.max_err_ga / bound);
        if (st.max_err_ga > bound + 1e-6) ++out.bound_violations;
    }
    return out;
}

std::string study_csv(const PriorStudyResult& r) {
    std::ostringstream os;
    os.precision(10);
    os << "structure,interp,mean_err_all_m,max_err_all_m,mean_err_near_m,max_err_near_m,"
          "mean_err_far_m,max_err_far_m,vertices,octants\n";
    for (const auto& row : r.rows) {
        os << row.structure << ',' << row.interp << ',' << row.mean_err_all << ','
           << row.max_err_all << ',' << row.mean_err_near << ',' << row.max_err_near << ','
           << row.mean_err_far << ',' << row.max_err_far << ',' << row.vertices << ','
           << row.octants << "\n";
    }
    return os.str();
}

}  // namespace gradsdf
