#include "gradsdf/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <thread>

#include "gradsdf/kernels.hpp"
#include "gradsdf/rng.hpp"

namespace gradsdf {

void GradBuffer::zero() {
    std::fill(net.begin(), net.end(), 0.0);
    std::fill(tree_d.begin(), tree_d.end(), 0.0);
    std::fill(tree_g.begin(), tree_g.end(), 0.0);
}

void GradBuffer::ensure(size_t net_params, size_t tree_slots) {
    net.resize(net_params, 0.0);
    tree_d.resize(tree_slots, 0.0);
    tree_g.resize(tree_slots * 3, 0.0);
}

void GradBuffer::add(const GradBuffer& o) {
    const auto& ops = kernels::active();
    ops.axpy(1.0, o.net.data(), net.data(), int(net.size()));
    ops.axpy(1.0, o.tree_d.data(), tree_d.data(), int(tree_d.size()));
    ops.axpy(1.0, o.tree_g.data(), tree_g.data(), int(tree_g.size()));
}

namespace {
double l2(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
}
}  // namespace

double GradBuffer::norm_net() const { return std::sqrt(l2(net)); }
double GradBuffer::norm_tree() const { return std::sqrt(l2(tree_d) + l2(tree_g)); }

void AdamMoments::ensure(size_t n) {
    m.resize(n, 0.0);
    v.resize(n, 0.0);
}

TrainState::TrainState(const RunConfig& cfg) : cfg_(cfg), tree_(cfg.octree) {
    cfg_.validate();
    if (cfg_.residual_enabled)
        net_ = std::make_unique<ResidualNet>(cfg_.hash, cfg_.mlp, cfg_.octree.root(),
                                             cfg_.train.seed);
    grads_.ensure(net_ ? net_->param_count() : 0, tree_.vertex_count());
    m_net_.ensure(net_ ? net_->param_count() : 0);
    m_tree_d_.ensure(tree_.vertex_count());
    m_tree_g_.ensure(tree_.vertex_count() * 3);

    int threads = cfg_.train.threads;
    if (threads <= 0) threads = int(std::thread::hardware_concurrency());
    worker_threads_ = std::clamp(threads, 1, 8);
}

double TrainState::prior_value(const Vec3& x) const {
    return cfg_.interp_ga ? tree_.interpolate_ga(x).value : tree_.interpolate_tl(x).value;
}

double TrainState::predict(const Vec3& x) const {
    double v = prior_value(x);
    if (net_) {
        NetWorkspace ws;
        double out;
        net_->forward(std::span<const Vec3>(&x, 1), std::span<double>(&out, 1), ws);
        v += out;
    }
    return v;
}

void TrainState::predict_batch(std::span<const Vec3> xs, std::span<double> out) const {
    constexpr size_t kChunk = 1024;
    NetWorkspace ws;
    std::vector<double> res(kChunk);
    for (size_t at = 0; at < xs.size(); at += kChunk) {
        const size_t n = std::min(kChunk, xs.size() - at);
        for (size_t i = 0; i < n; ++i) out[at + i] = prior_value(xs[at + i]);
        if (net_) {
            net_->forward(xs.subspan(at, n), std::span<double>(res.data(), n), ws);
            for (size_t i = 0; i < n; ++i) out[at + i] += res[i];
        }
    }
}

Vec3 TrainState::numerical_gradient(const Vec3& x, double eps) const {
    const Aabb root = cfg_.octree.root();
    Vec3 g;
    for (int a = 0; a < 3; ++a) {
        Vec3 hi = x, lo = x;
        hi.set(a, x[a] + eps);
        lo.set(a, x[a] - eps);
        if (!root.contains(hi) || !root.contains(lo))
            throw OutOfBounds("numerical_gradient: stencil leaves root");
        g.set(a, (predict(hi) - predict(lo)) / (2.0 * eps));
    }
    return g;
}

struct TrainState::SampleRef {
    Vec3 x;
    int cls;        // 0 surface, 1 perturbed, 2 free
    double target;  // d~ for cls 1, 2
    double sign;    // +1 / -1 for cls 1
    bool stencil_ok;
};

void TrainState::accumulate_range(const SampleBatch& batch, const std::vector<SampleRef>& samples,
                                  size_t begin, size_t end, size_t eik_sp_n, size_t eik_f_n,
                                  bool with_gradients, GradBuffer* gb, LossValues* lv) const {
    (void)batch;
    const double eps = cfg_.train.fd_epsilon;
    const size_t S = std::max<size_t>(1, batch.surface.size());
    const size_t P = std::max<size_t>(1, batch.perturbed.size());
    const size_t F = std::max<size_t>(1, batch.free.size());
    const double c_rs = cfg_.loss.recon_surface / double(S);
    const double c_rp = cfg_.loss.recon_perturb / double(P);
    const double c_pj = cfg_.loss.proj / double(F);
    const double c_es = eik_sp_n ? cfg_.loss.eik_surface / double(eik_sp_n) : 0.0;
    const double c_ef = eik_f_n ? cfg_.loss.eik_free / double(eik_f_n) : 0.0;
    auto sgn = [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); };

    constexpr size_t kChunk = 256;  // samples per chunk; up to 7x points
    NetWorkspace ws;
    std::vector<Vec3> pts;
    std::vector<size_t> base;  // per chunk-sample: index of its center point
    std::vector<SemiSparseOctree::InterpResult> prior;
    std::vector<double> vals, res, upstream;

    for (size_t cs = begin; cs < end; cs += kChunk) {
        const size_t ce = std::min(end, cs + kChunk);
        pts.clear();
        base.clear();
        for (size_t s = cs; s < ce; ++s) {
            base.push_back(pts.size());
            const SampleRef& r = samples[s];
            pts.push_back(r.x);
            if (r.stencil_ok) {
                for (int a = 0; a < 3; ++a) {
                    Vec3 hi = r.x, lo = r.x;
                    hi.set(a, r.x[a] + eps);
                    lo.set(a, r.x[a] - eps);
                    pts.push_back(hi);
                    pts.push_back(lo);
                }
            }
        }

        const size_t n = pts.size();
        prior.resize(n);
        vals.resize(n);
        for (size_t i = 0; i < n; ++i) {
            prior[i] = cfg_.interp_ga ? tree_.interpolate_ga(pts[i]) : tree_.interpolate_tl(pts[i]);
            vals[i] = prior[i].value;
        }
        if (net_) {
            res.resize(n);
            net_->forward(pts, res, ws);
            for (size_t i = 0; i < n; ++i) vals[i] += res[i];
        }

        upstream.assign(n, 0.0);
        for (size_t s = cs; s < ce; ++s) {
            const SampleRef& r = samples[s];
            const size_t b = base[s - cs];
            const double dc = vals[b];
            if (r.cls == 0) {
                lv->recon += c_rs * std::abs(dc);
                upstream[b] += c_rs * sgn(dc);
            } else if (r.cls == 1) {
                const double resid = dc - r.sign * r.target;
                lv->recon += c_rp * std::abs(resid);
                upstream[b] += c_rp * sgn(resid);
            } else {
                const double resid = dc - r.target;
                lv->proj += c_pj * std::abs(resid);
                upstream[b] += c_pj * sgn(resid);
            }
            if (r.stencil_ok) {
                double g[3];
                for (int a = 0; a < 3; ++a)
                    g[a] = (vals[b + 1 + 2 * a] - vals[b + 2 + 2 * a]) / (2.0 * eps);
                const double nrm = std::sqrt(g[0] * g[0] + g[1] * g[1] + g[2] * g[2]);
                const double w = r.cls == 2 ? c_ef : c_es;
                lv->eik += w * std::abs(nrm - 1.0);
                if (nrm > 0.0) {
                    const double k = w * sgn(nrm - 1.0) / (nrm * 2.0 * eps);
                    for (int a = 0; a < 3; ++a) {
                        upstream[b + 1 + 2 * a] += k * g[a];
                        upstream[b + 2 + 2 * a] -= k * g[a];
                    }
                }
            }
        }

        if (with_gradients) {
            for (size_t i = 0; i < n; ++i) {
                const double u = upstream[i];
                if (u == 0.0) continue;
                const auto& pc = prior[i];
                for (int k = 0; k < 8; ++k) {
                    const double uw = u * pc.weights[k];
                    const uint32_t slot = pc.slots[k];
                    gb->tree_d[slot] += uw;
                    gb->tree_g[3 * slot + 0] += uw * pc.offsets[k].x;
                    gb->tree_g[3 * slot + 1] += uw * pc.offsets[k].y;
                    gb->tree_g[3 * slot + 2] += uw * pc.offsets[k].z;
                }
            }
            if (net_) net_->backward(upstream, ws, gb->net);
        }
    }
}

std::vector<TrainState::SampleRef> TrainState::make_sample_refs(const SampleBatch& batch) const {
    const Aabb root = cfg_.octree.root();
    const double eps = cfg_.train.fd_epsilon;

    std::vector<SampleRef> samples;
    samples.reserve(batch.surface.size() + batch.perturbed.size() + batch.free.size());
    auto stencil_ok = [&](const Vec3& x) {
        return x.x - eps >= root.min.x && x.x + eps <= root.max.x && x.y - eps >= root.min.y &&
               x.y + eps <= root.max.y && x.z - eps >= root.min.z && x.z + eps <= root.max.z;
    };
    for (const Vec3& x : batch.surface) samples.push_back({x, 0, 0.0, 0.0, stencil_ok(x)});
    for (size_t i = 0; i < batch.perturbed.size(); ++i)
        samples.push_back({batch.perturbed[i], 1, batch.perturbed_target[i],
                           double(batch.perturbed_sign[i]), stencil_ok(batch.perturbed[i])});
    for (size_t i = 0; i < batch.free.size(); ++i)
        samples.push_back({batch.free[i], 2, batch.free_target[i], 0.0, stencil_ok(batch.free[i])});
    return samples;
}

LossValues TrainState::compute_losses(const SampleBatch& batch, bool with_gradients) {
    const std::vector<SampleRef> samples = make_sample_refs(batch);

    size_t eik_sp_n = 0, eik_f_n = 0, dropped = 0;
    for (const SampleRef& r : samples) {
        if (!r.stencil_ok) {
            ++dropped;
            continue;
        }
        (r.cls == 2 ? eik_f_n : eik_sp_n) += 1;
    }

    grads_.ensure(net_ ? net_->param_count() : 0, tree_.vertex_count());

    const size_t total = samples.size();
    const int nthreads = int(std::min<size_t>(worker_threads_, std::max<size_t>(total / 64, 1)));
    LossValues out;
    out.eik_dropped = dropped;

    if (nthreads <= 1) {
        accumulate_range(batch, samples, 0, total, eik_sp_n, eik_f_n, with_gradients, &grads_, &out);
        return out;
    }

    std::vector<GradBuffer> gbs(nthreads);
    std::vector<LossValues> lvs(nthreads);
    if (with_gradients)
        for (auto& gb : gbs) gb.ensure(grads_.net.size(), tree_.vertex_count());
    std::vector<std::thread> workers;
    for (int t = 0; t < nthreads; ++t) {
        const size_t lo = total * t / nthreads;
        const size_t hi = total * (t + 1) / nthreads;
        workers.emplace_back([&, t, lo, hi] {
            accumulate_range(batch, samples, lo, hi, eik_sp_n, eik_f_n, with_gradients, &gbs[t],
                             &lvs[t]);
        });
    }
    for (auto& w : workers) w.join();
    for (int t = 0; t < nthreads; ++t) {  // fixed merge order
        out.recon += lvs[t].recon;
        out.eik += lvs[t].eik;
        out.proj += lvs[t].proj;
        if (with_gradients) grads_.add(gbs[t]);
    }
    return out;
}

uint64_t TrainState::kink_signature(const SampleBatch& batch) const {
    const std::vector<SampleRef> samples = make_sample_refs(batch);
    const double eps = cfg_.train.fd_epsilon;

    uint64_t hash = 0xcbf29ce484222325ull;  // FNV-1a over branch bits
    auto mix = [&hash](uint64_t bit) {
        hash ^= bit + 1;
        hash *= 0x100000001b3ull;
    };

    constexpr size_t kChunk = 256;
    NetWorkspace ws;
    std::vector<Vec3> pts;
    std::vector<size_t> base;
    std::vector<double> vals, res;
    auto sgn = [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); };

    for (size_t cs = 0; cs < samples.size(); cs += kChunk) {
        const size_t ce = std::min(samples.size(), cs + kChunk);
        pts.clear();
        base.clear();
        for (size_t s = cs; s < ce; ++s) {
            base.push_back(pts.size());
            const SampleRef& r = samples[s];
            pts.push_back(r.x);
            if (r.stencil_ok)
                for (int a = 0; a < 3; ++a) {
                    Vec3 hi = r.x, lo = r.x;
                    hi.set(a, r.x[a] + eps);
                    lo.set(a, r.x[a] - eps);
                    pts.push_back(hi);
                    pts.push_back(lo);
                }
        }
        const size_t n = pts.size();
        vals.resize(n);
        for (size_t i = 0; i < n; ++i)
            vals[i] = cfg_.interp_ga ? tree_.interpolate_ga(pts[i]).value
                                     : tree_.interpolate_tl(pts[i]).value;
        if (net_) {
            res.resize(n);
            net_->forward(pts, res, ws);
            for (size_t i = 0; i < n; ++i) vals[i] += res[i];
            for (double z : ws.z) mix(z > 0.0 ? 1 : 0);
        }
        for (size_t s = cs; s < ce; ++s) {
            const SampleRef& r = samples[s];
            const size_t b = base[s - cs];
            const double dc = vals[b];
            if (r.cls == 0)
                mix(uint64_t(2 + int(sgn(dc))));
            else if (r.cls == 1)
                mix(uint64_t(2 + int(sgn(dc - r.sign * r.target))));
            else
                mix(uint64_t(2 + int(sgn(dc - r.target))));
            if (r.stencil_ok) {
                double g[3];
                for (int a = 0; a < 3; ++a)
                    g[a] = (vals[b + 1 + 2 * a] - vals[b + 2 + 2 * a]) / (2.0 * eps);
                const double nrm = std::sqrt(g[0] * g[0] + g[1] * g[1] + g[2] * g[2]);
                mix(uint64_t(2 + int(sgn(nrm - 1.0))));
                mix(nrm > 0.0 ? 1 : 0);
            }
        }
    }
    return hash;
}

void TrainState::adam_update() {
    const double b1 = cfg_.train.adam_beta1;
    const double b2 = cfg_.train.adam_beta2;
    const double eps = cfg_.train.adam_eps;
    const double t = double(step_);
    const double bc1 = 1.0 - std::pow(b1, t);
    const double bc2 = 1.0 - std::pow(b2, t);

    auto update = [&](auto* p, const double* g, AdamMoments& mo, size_t n, double lr) {
        using P = std::remove_reference_t<decltype(p[0])>;
        for (size_t i = 0; i < n; ++i) {
            mo.m[i] = b1 * mo.m[i] + (1.0 - b1) * g[i];
            mo.v[i] = b2 * mo.v[i] + (1.0 - b2) * g[i] * g[i];
            const double mhat = mo.m[i] / bc1;
            const double vhat = mo.v[i] / bc2;
            p[i] = P(double(p[i]) - lr * mhat / (std::sqrt(vhat) + eps));
        }
    };

    if (net_) {
        m_net_.ensure(net_->param_count());
        update(net_->params().data(), grads_.net.data(), m_net_, net_->param_count(),
               cfg_.train.lr_net);
    }
    m_tree_d_.ensure(tree_.vertex_count());
    m_tree_g_.ensure(tree_.vertex_count() * 3);
    update(tree_.values().data(), grads_.tree_d.data(), m_tree_d_, tree_.vertex_count(),
           cfg_.train.lr_octree);
    update(tree_.gradients().data(), grads_.tree_g.data(), m_tree_g_, tree_.vertex_count() * 3,
           cfg_.train.lr_octree);

    // Keep vertex gradients bounded; the clamp sits far above the Eikonal
    // target so it never binds near convergence.
    const double clamp = cfg_.grad_clamp;
    double* g = tree_.gradients().data();
    for (size_t s = 0; s < tree_.vertex_count(); ++s) {
        const double gx = g[3 * s], gy = g[3 * s + 1], gz = g[3 * s + 2];
        const double n = std::sqrt(gx * gx + gy * gy + gz * gz);
        if (n > clamp) {
            const double k = clamp / n;
            g[3 * s] = gx * k;
            g[3 * s + 1] = gy * k;
            g[3 * s + 2] = gz * k;
        }
    }
}

StepReport TrainState::train_step(const SampleBatch& batch) {
    grads_.ensure(net_ ? net_->param_count() : 0, tree_.vertex_count());
    grads_.zero();
    LossValues loss = compute_losses(batch, true);
    if (int64_t(step_) == cfg_.train.inject_nan_step)
        loss.recon = std::numeric_limits<double>::quiet_NaN();
    if (!std::isfinite(loss.total()))
        throw NonFiniteLoss("non-finite loss at step " + std::to_string(step_) +
                            " (recon=" + std::to_string(loss.recon) +
                            " eik=" + std::to_string(loss.eik) +
                            " proj=" + std::to_string(loss.proj) + ")");
    ++step_;
    adam_update();

    StepReport report;
    report.loss = loss;
    report.grad_norm_net = grads_.norm_net();
    report.grad_norm_tree = grads_.norm_tree();
    return report;
}

uint64_t TrainState::batch_seed(uint64_t run_seed, uint32_t frame_id, int iter) {
    SplitMix64 g(run_seed ^ (uint64_t(frame_id) << 24) ^ uint64_t(uint32_t(iter)));
    return g.next();
}

FrameReport TrainState::process_frame(const Frame& frame) {
    const auto t0 = std::chrono::steady_clock::now();
    FrameReport report;
    report.frame_id = frame.id;

    const Aabb root = cfg_.octree.root();
    Frame kept;
    kept.origin = frame.origin;
    kept.id = frame.id;
    kept.points.reserve(frame.points.size());
    for (const Vec3& p : frame.points) {
        if (p.finite() && root.contains(p))
            kept.points.push_back(p);
        else
            ++report.dropped_points;
    }
    report.points = kept.points.size();
    if (kept.points.empty()) {
        report.skipped = true;
        return report;
    }

    const InsertReport ins = tree_.insert_points(kept.points);
    report.octants_created = ins.octants_created;
    report.vertices_created = ins.vertices_created;
    grads_.ensure(net_ ? net_->param_count() : 0, tree_.vertex_count());
    m_tree_d_.ensure(tree_.vertex_count());
    m_tree_g_.ensure(tree_.vertex_count() * 3);

    std::vector<uint64_t> octants;
    octants.reserve(kept.points.size());
    for (const Vec3& p : kept.points) {
        const auto c = tree_.leaf_cell(p);
        octants.push_back(pack_key(c[0], c[1], c[2]));
    }
    report.keyframe_inserted =
        keyframes_.maybe_insert(kept, std::move(octants), cfg_.sampling.keyframe_min_iou);
    report.keyframes_total = keyframes_.size();

    const std::vector<size_t> selected = keyframes_.select(cfg_.sampling.keyframe_window);
    std::vector<const Frame*> batch_frames;
    bool current_included = false;
    for (size_t idx : selected) {
        batch_frames.push_back(&keyframes_.entries()[idx].frame);
        if (keyframes_.entries()[idx].frame.id == kept.id) current_included = true;
    }
    if (!current_included) batch_frames.push_back(&kept);

    for (int iter = 0; iter < cfg_.train.iters_per_frame; ++iter) {
        const SampleBatch batch = generate_batch(
            batch_frames, cfg_.sampling, root, batch_seed(cfg_.train.seed, kept.id, iter));
        try {
            const StepReport sr = train_step(batch);
            report.last_loss = sr.loss;
        } catch (const NonFiniteLoss& e) {
            throw NonFiniteLoss("frame " + std::to_string(kept.id) + ": " + e.what());
        }
    }

    ++frames_processed_;
    report.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

size_t TrainState::group_size(int group) const {
    switch (group) {
        case 0: return tree_.vertex_count();
        case 1: return tree_.vertex_count() * 3;
        case 2: return net_ ? net_->param_count() : 0;
    }
    return 0;
}

double TrainState::get_param(int group, size_t idx) const {
    switch (group) {
        case 0: return tree_.values()[idx];
        case 1: return tree_.gradients()[idx];
        case 2: return double(net_->params()[idx]);
    }
    return 0.0;
}

void TrainState::set_param(int group, size_t idx, double v) {
    switch (group) {
        case 0: tree_.values()[idx] = v; break;
        case 1: tree_.gradients()[idx] = v; break;
        case 2: net_->params()[idx] = float(v); break;
    }
}

void run_online(TrainState& state, const FrameSource& next_frame, const FrameCallback& on_frame) {
    while (auto frame = next_frame()) {
        const FrameReport report = state.process_frame(*frame);
        if (on_frame) on_frame(report, state);
    }
}

}  // namespace gradsdf
