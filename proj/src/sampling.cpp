#include "gradsdf/sampling.hpp"

#include <algorithm>
#include <fstream>
#include <unordered_set>

#include "gradsdf/rng.hpp"
#include "gradsdf/spatial.hpp"

namespace gradsdf {

double octant_iou(const std::vector<uint64_t>& a, const std::vector<uint64_t>& b) {
    size_t i = 0, j = 0, inter = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] == b[j]) {
            ++inter;
            ++i;
            ++j;
        } else if (a[i] < b[j]) {
            ++i;
        } else {
            ++j;
        }
    }
    const size_t uni = a.size() + b.size() - inter;
    return uni == 0 ? 1.0 : double(inter) / double(uni);
}

bool KeyframeStore::maybe_insert(Frame frame, std::vector<uint64_t> octants, double min_iou) {
    std::sort(octants.begin(), octants.end());
    octants.erase(std::unique(octants.begin(), octants.end()), octants.end());
    if (!entries_.empty()) {
        const double iou = octant_iou(octants, entries_.back().octants);
        if (iou >= min_iou) return false;
    }
    entries_.push_back({std::move(frame), std::move(octants)});
    return true;
}

void KeyframeStore::restore_entry(Frame frame, std::vector<uint64_t> octants) {
    std::sort(octants.begin(), octants.end());
    octants.erase(std::unique(octants.begin(), octants.end()), octants.end());
    entries_.push_back({std::move(frame), std::move(octants)});
}

std::vector<size_t> KeyframeStore::select(int width) const {
    std::vector<size_t> selected;
    if (entries_.empty() || width <= 0) return selected;

    std::vector<bool> taken(entries_.size(), false);
    std::unordered_set<uint64_t> masked;

    auto unmasked_count = [&](size_t i) {
        size_t n = 0;
        for (uint64_t o : entries_[i].octants)
            if (!masked.count(o)) ++n;
        return n;
    };
    auto best_candidate = [&]() {
        size_t best = entries_.size();
        size_t best_count = 0;
        for (size_t i = 0; i < entries_.size(); ++i) {
            if (taken[i]) continue;
            const size_t c = unmasked_count(i);
            // >= so the most recent frame wins ties (ids grow with index).
            if (best == entries_.size() || c >= best_count) {
                best = i;
                best_count = c;
            }
        }
        return std::pair{best, best_count};
    };

    while (int(selected.size()) < width) {
        auto [best, count] = best_candidate();
        if (best == entries_.size()) break;  // nothing left to select
        if (count == 0 && !selected.empty()) {
            // Everything visible is masked: restart coverage, keeping only the
            // last selected frame's octants masked.
            masked.clear();
            for (uint64_t o : entries_[selected.back()].octants) masked.insert(o);
            std::tie(best, count) = best_candidate();
            if (best == entries_.size()) break;
        }
        taken[best] = true;
        selected.push_back(best);
        for (uint64_t o : entries_[best].octants) masked.insert(o);
    }
    return selected;
}

SampleBatch generate_batch(std::span<const Frame* const> frames, const SampleParams& params,
                           const Aabb& root, uint64_t seed) {
    SampleBatch batch;
    batch.seed = seed;
    if (frames.empty()) return batch;
    if (params.total_rays < int(frames.size()))
        throw ConfigError("generate_batch: fewer rays than frames");

    const int quota = params.total_rays / int(frames.size());
    SplitMix64 rng(seed);

    struct RaySample {
        Vec3 point;
        int kind;  // 0 perturbed, 1 free
        int8_t sign;
    };
    std::vector<RaySample> pending;

    std::vector<uint32_t> order;
    for (const Frame* frame : frames) {
        const int m = int(frame->points.size());
        int q = quota;
        if (m < q) {
            q = m;
            ++batch.quota_reductions;
        }
        order.resize(m);
        for (int i = 0; i < m; ++i) order[i] = i;
        // Partial Fisher-Yates: first q entries are a uniform sample without
        // replacement.
        for (int j = 0; j < q; ++j)
            std::swap(order[j], order[j + int(rng.below(uint64_t(m - j)))]);

        const Vec3 o = frame->origin;
        for (int j = 0; j < q; ++j) {
            const Vec3 q_hit = frame->points[order[j]];
            const Vec3 dir = q_hit - o;
            batch.surface.push_back(q_hit);
            for (int n = 0; n < params.n_perturb; ++n) {
                double alpha = 1.0 + params.perturb_sigma * rng.normal();
                alpha = std::min(std::max(alpha, 1.0 - 2.0 * params.perturb_sigma),
                                 1.0 + 2.0 * params.perturb_sigma);
                const Vec3 x = o + alpha * dir;
                if (root.contains(x))
                    pending.push_back({x, 0, int8_t(alpha < 1.0 ? 1 : -1)});
                else
                    ++batch.dropped_out_of_root;
            }
            for (int n = 0; n < params.n_free; ++n) {
                const double lambda = rng.uniform(params.free_margin, 1.0 - params.free_margin);
                pending.push_back({o + lambda * dir, 1, 0});
            }
        }
    }

    PointGridIndex index(batch.surface);
    for (const RaySample& s : pending) {
        const double d = index.nearest_dist(s.point);
        if (s.kind == 0) {
            batch.perturbed.push_back(s.point);
            batch.perturbed_target.push_back(d);
            batch.perturbed_sign.push_back(s.sign);
        } else {
            batch.free.push_back(s.point);
            batch.free_target.push_back(d);
        }
    }
    return batch;
}

void write_batch_dump(const std::string& path, const SampleBatch& batch) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write batch dump: " + path);
    auto put_u32 = [&os](uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); };
    auto put_f32 = [&os](float v) { os.write(reinterpret_cast<const char*>(&v), 4); };
    auto put_pt = [&](const Vec3& p) {
        put_f32(float(p.x));
        put_f32(float(p.y));
        put_f32(float(p.z));
    };
    os.write("NSBT", 4);
    put_u32(1);
    put_u32(uint32_t(batch.surface.size()));
    put_u32(uint32_t(batch.perturbed.size()));
    put_u32(uint32_t(batch.free.size()));
    for (const Vec3& p : batch.surface) put_pt(p);
    for (size_t i = 0; i < batch.perturbed.size(); ++i) {
        put_pt(batch.perturbed[i]);
        put_f32(float(batch.perturbed_target[i]));
        os.write(reinterpret_cast<const char*>(&batch.perturbed_sign[i]), 1);
    }
    for (size_t i = 0; i < batch.free.size(); ++i) {
        put_pt(batch.free[i]);
        put_f32(float(batch.free_target[i]));
    }
    if (!os) throw IoError("short write on batch dump: " + path);
}

}  // namespace gradsdf
