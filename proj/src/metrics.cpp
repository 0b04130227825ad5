#include "gradsdf/metrics.hpp"

#include <cmath>
#include <fstream>
#include <ostream>
#include <thread>

#include "gradsdf/spatial.hpp"

namespace gradsdf {

MeshMetrics mesh_metrics(const TriMesh& recon, const TriMesh& gt, int samples, double threshold,
                         uint64_t seed) {
    const std::vector<Vec3> cloud_r = sample_surface(recon, samples, seed);
    const std::vector<Vec3> cloud_g = sample_surface(gt, samples, seed);

    PointGridIndex idx_g(cloud_g, threshold);
    PointGridIndex idx_r(cloud_r, threshold);

    double acc_sum = 0.0, comp_sum = 0.0;
    size_t acc_hits = 0, comp_hits = 0;
    for (const Vec3& p : cloud_r) {
        const double d = idx_g.nearest_dist(p);
        acc_sum += d;
        if (d < threshold) ++acc_hits;
    }
    for (const Vec3& p : cloud_g) {
        const double d = idx_r.nearest_dist(p);
        comp_sum += d;
        if (d < threshold) ++comp_hits;
    }

    MeshMetrics m;
    const double n = double(samples);
    const double accuracy = acc_sum / n;
    const double completion = comp_sum / n;
    m.accuracy_cm = accuracy * 100.0;
    m.completion_cm = completion * 100.0;
    m.chamfer_cm = 0.5 * (accuracy + completion) * 100.0;
    m.precision_pct = 100.0 * double(acc_hits) / n;
    m.recall_pct = 100.0 * double(comp_hits) / n;
    m.completion_ratio_pct = m.recall_pct;
    m.f1_pct = (m.precision_pct + m.recall_pct) > 0.0
                   ? 2.0 * m.precision_pct * m.recall_pct / (m.precision_pct + m.recall_pct)
                   : 0.0;
    return m;
}

SdfGridSpec eval_grid_for(const Aabb& gt_bounds, const Aabb& domain, const EvalConfig& eval) {
    const Vec3 pad{eval.padding, eval.padding, eval.padding};
    Aabb padded{gt_bounds.min - pad, gt_bounds.max + pad};
    return {padded.intersect(domain), eval.resolution};
}

SdfFieldMetrics eval_sdf_field(const FieldWithGradient& model, const AnalyticScene& scene,
                               const SdfGridSpec& grid, const EvalConfig& eval) {
    SdfFieldMetrics out;
    const Aabb box = grid.bounds.intersect(model.domain);
    const double res = grid.resolution;
    const Vec3 ext = box.extent();
    const int nx = std::max(1, int(std::floor(ext.x / res)));
    const int ny = std::max(1, int(std::floor(ext.y / res)));
    const int nz = std::max(1, int(std::floor(ext.z / res)));

    // Kept grid centers with their oracle values.
    std::vector<Vec3> pts;
    std::vector<double> oracle;
    for (int k = 0; k < nz; ++k)
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i) {
                const Vec3 p{box.min.x + (i + 0.5) * res, box.min.y + (j + 0.5) * res,
                             box.min.z + (k + 0.5) * res};
                const double d = scene_sdf(scene, p);
                if (d < eval.near_min) continue;
                pts.push_back(p);
                oracle.push_back(d);
            }
    out.kept = pts.size();
    if (pts.empty()) return out;
    out.valid_ratio_pct = 100.0;  // every kept center lies inside the model domain

    const double eps = model.fd_eps;
    auto stencil_ok = [&](const Vec3& x) {
        return x.x - eps >= model.domain.min.x && x.x + eps <= model.domain.max.x &&
               x.y - eps >= model.domain.min.y && x.y + eps <= model.domain.max.y &&
               x.z - eps >= model.domain.min.z && x.z + eps <= model.domain.max.z;
    };

    struct Partial {
        double ae_all = 0, ae_near = 0, ae_far = 0;
        double ang_all = 0, ang_near = 0, ang_far = 0;
        uint64_t ang_all_n = 0, ang_near_n = 0, ang_far_n = 0;
        uint64_t near_count = 0, far_count = 0;
        uint64_t medial_skipped = 0, gradient_skipped = 0;
        uint64_t near_norm_total = 0, near_norm_in_range = 0;
    };

    auto process_range = [&](size_t begin, size_t end, Partial& part) {
        constexpr size_t kChunk = 4096;
        std::vector<Vec3> eval_pts;
        std::vector<double> eval_vals;
        std::vector<int> grad_base;
        for (size_t at = begin; at < end; at += kChunk) {
            const size_t n = std::min(kChunk, end - at);
            eval_pts.clear();
            grad_base.assign(n, -1);
            for (size_t i = 0; i < n; ++i) {
                eval_pts.push_back(pts[at + i]);
                if (stencil_ok(pts[at + i])) {
                    grad_base[i] = int(eval_pts.size());
                    for (int a = 0; a < 3; ++a) {
                        Vec3 hi = pts[at + i], lo = pts[at + i];
                        hi.set(a, hi[a] + eps);
                        lo.set(a, lo[a] - eps);
                        eval_pts.push_back(hi);
                        eval_pts.push_back(lo);
                    }
                }
            }
            eval_vals.resize(eval_pts.size());
            model.value(eval_pts, eval_vals);

            size_t cursor = 0;
            for (size_t i = 0; i < n; ++i) {
                const double d_gt = oracle[at + i];
                const bool near = d_gt <= eval.near_max;
                const double err = std::abs(eval_vals[cursor] - d_gt);
                part.ae_all += err;
                (near ? part.ae_near : part.ae_far) += err;
                (near ? part.near_count : part.far_count) += 1;

                if (grad_base[i] < 0) {
                    ++part.gradient_skipped;
                } else {
                    const size_t b = size_t(grad_base[i]);
                    Vec3 g;
                    for (int a = 0; a < 3; ++a)
                        g.set(a, (eval_vals[b + 2 * a] - eval_vals[b + 2 * a + 1]) / (2.0 * eps));
                    const double nrm = g.norm();
                    if (near) {
                        ++part.near_norm_total;
                        if (nrm >= 0.8 && nrm <= 1.2) ++part.near_norm_in_range;
                    }
                    const auto og = scene_sdf_gradient(scene, pts[at + i]);
                    if (!og) {
                        ++part.medial_skipped;
                    } else {
                        double angle = 1.5707963267948966;  // undefined model gradient
                        if (nrm > 1e-12) {
                            double c = g.dot(*og) / nrm;
                            c = std::min(1.0, std::max(-1.0, c));
                            angle = std::acos(c);
                        }
                        part.ang_all += angle;
                        ++part.ang_all_n;
                        (near ? part.ang_near : part.ang_far) += angle;
                        (near ? part.ang_near_n : part.ang_far_n) += 1;
                    }
                }
                cursor += grad_base[i] < 0 ? 1 : 7;
            }
        }
    };

    // Read-only over the model: split across two workers, merge in order.
    Partial parts[2];
    const size_t mid = pts.size() / 2;
    {
        std::thread worker([&] { process_range(0, mid, parts[0]); });
        process_range(mid, pts.size(), parts[1]);
        worker.join();
    }
    Partial sum;
    for (const Partial& p : parts) {
        sum.ae_all += p.ae_all;
        sum.ae_near += p.ae_near;
        sum.ae_far += p.ae_far;
        sum.ang_all += p.ang_all;
        sum.ang_near += p.ang_near;
        sum.ang_far += p.ang_far;
        sum.ang_all_n += p.ang_all_n;
        sum.ang_near_n += p.ang_near_n;
        sum.ang_far_n += p.ang_far_n;
        sum.near_count += p.near_count;
        sum.far_count += p.far_count;
        sum.medial_skipped += p.medial_skipped;
        sum.gradient_skipped += p.gradient_skipped;
        sum.near_norm_total += p.near_norm_total;
        sum.near_norm_in_range += p.near_norm_in_range;
    }

    out.near_count = sum.near_count;
    out.far_count = sum.far_count;
    out.medial_skipped = sum.medial_skipped;
    out.gradient_skipped = sum.gradient_skipped;
    out.mae_all_cm = 100.0 * sum.ae_all / double(out.kept);
    if (out.near_count) out.mae_near_cm = 100.0 * sum.ae_near / double(out.near_count);
    if (out.far_count) out.mae_far_cm = 100.0 * sum.ae_far / double(out.far_count);
    if (sum.ang_all_n) out.grad_mae_all_rad = sum.ang_all / double(sum.ang_all_n);
    if (sum.ang_near_n) out.grad_mae_near_rad = sum.ang_near / double(sum.ang_near_n);
    if (sum.ang_far_n) out.grad_mae_far_rad = sum.ang_far / double(sum.ang_far_n);
    if (sum.near_norm_total)
        out.near_grad_norm_in_range_pct =
            100.0 * double(sum.near_norm_in_range) / double(sum.near_norm_total);
    return out;
}

void write_mesh_metrics(std::ostream& os, const MeshMetrics& m) {
    os << "chamfer_cm = " << m.chamfer_cm << "\n";
    os << "f1_pct = " << m.f1_pct << "\n";
    os << "precision_pct = " << m.precision_pct << "\n";
    os << "recall_pct = " << m.recall_pct << "\n";
    os << "completion_cm = " << m.completion_cm << "\n";
    os << "completion_ratio_pct = " << m.completion_ratio_pct << "\n";
    os << "accuracy_cm = " << m.accuracy_cm << "\n";
}

void write_sdf_metrics(std::ostream& os, const SdfFieldMetrics& m) {
    os << "sdf_mae_all_cm = " << m.mae_all_cm << "\n";
    os << "sdf_mae_near_cm = " << m.mae_near_cm << "\n";
    os << "sdf_mae_far_cm = " << m.mae_far_cm << "\n";
    os << "grad_mae_all_rad = " << m.grad_mae_all_rad << "\n";
    os << "grad_mae_near_rad = " << m.grad_mae_near_rad << "\n";
    os << "grad_mae_far_rad = " << m.grad_mae_far_rad << "\n";
    os << "valid_ratio_pct = " << m.valid_ratio_pct << "\n";
    os << "near_grad_norm_in_range_pct = " << m.near_grad_norm_in_range_pct << "\n";
    os << "kept_points = " << m.kept << "\n";
    os << "near_points = " << m.near_count << "\n";
    os << "far_points = " << m.far_count << "\n";
    os << "medial_skipped = " << m.medial_skipped << "\n";
    os << "gradient_skipped = " << m.gradient_skipped << "\n";
}

void write_slice(const std::string& path, const BatchField& field, const Vec3& origin, double z,
                 uint32_t nx, uint32_t ny, double resolution) {
    std::vector<Vec3> pts;
    pts.reserve(size_t(nx) * ny);
    for (uint32_t j = 0; j < ny; ++j)
        for (uint32_t i = 0; i < nx; ++i)
            pts.push_back({origin.x + (i + 0.5) * resolution, origin.y + (j + 0.5) * resolution, z});
    std::vector<double> vals(pts.size());
    field(pts, vals);

    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write slice: " + path);
    os.write("NSLC", 4);
    const uint32_t version = 1;
    os.write(reinterpret_cast<const char*>(&version), 4);
    const double org[3] = {origin.x, origin.y, origin.z};
    os.write(reinterpret_cast<const char*>(org), sizeof(org));
    os.write(reinterpret_cast<const char*>(&z), sizeof(z));
    os.write(reinterpret_cast<const char*>(&nx), 4);
    os.write(reinterpret_cast<const char*>(&ny), 4);
    os.write(reinterpret_cast<const char*>(&resolution), sizeof(resolution));
    for (double v : vals) {
        const float f = float(v);
        os.write(reinterpret_cast<const char*>(&f), sizeof(f));
    }
    if (!os) throw IoError("short write on slice: " + path);
}

}  // namespace gradsdf
