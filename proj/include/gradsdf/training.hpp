#pragma once

#include <functional>
#include <memory>
#include <optional>

#include "gradsdf/config.hpp"
#include "gradsdf/octree.hpp"
#include "gradsdf/residual.hpp"
#include "gradsdf/sampling.hpp"

namespace gradsdf {

// Accumulators mirroring every learnable scalar: residual-net parameters plus
// per-vertex octree values and gradients. f64 throughout; zeroed per step.
struct GradBuffer {
    std::vector<double> net;     // aligned with ResidualNet::params()
    std::vector<double> tree_d;  // one per vertex slot
    std::vector<double> tree_g;  // three per vertex slot

    void zero();
    void ensure(size_t net_params, size_t tree_slots);
    void add(const GradBuffer& o);  // element-wise merge (deterministic order)
    double norm_net() const;
    double norm_tree() const;
};

struct AdamMoments {
    std::vector<double> m, v;
    void ensure(size_t n);
};

struct LossValues {
    double recon = 0.0, eik = 0.0, proj = 0.0;
    uint64_t eik_dropped = 0;  // samples whose stencil left the root
    double total() const { return recon + eik + proj; }
};

struct StepReport {
    LossValues loss;
    double grad_norm_net = 0.0, grad_norm_tree = 0.0;
};

struct FrameReport {
    uint32_t frame_id = 0;
    size_t points = 0;
    uint64_t dropped_points = 0;
    uint64_t octants_created = 0, vertices_created = 0;
    bool keyframe_inserted = false;
    size_t keyframes_total = 0;
    LossValues last_loss;
    double wall_ms = 0.0;
    bool skipped = false;
};

// Mutable model + optimizer state for one reconstruction run. One training
// step is a serial transaction; the internal per-sample work is split across
// worker threads with per-thread gradient buffers merged in thread order, so
// results do not depend on scheduling.
class TrainState {
   public:
    explicit TrainState(const RunConfig& cfg);

    const RunConfig& config() const { return cfg_; }
    SemiSparseOctree& tree() { return tree_; }
    const SemiSparseOctree& tree() const { return tree_; }
    ResidualNet* net() { return net_.get(); }
    const ResidualNet* net() const { return net_.get(); }
    KeyframeStore& keyframes() { return keyframes_; }
    const KeyframeStore& keyframes() const { return keyframes_; }
    uint64_t global_step() const { return step_; }
    uint32_t frames_processed() const { return frames_processed_; }

    // Combined prediction: octree prior (ga, or tl in the ablation) plus the
    // neural residual when enabled.
    double predict(const Vec3& x) const;
    void predict_batch(std::span<const Vec3> xs, std::span<double> out) const;
    double prior_value(const Vec3& x) const;

    // Central differences over the combined field. Throws OutOfBounds when
    // x +- eps e_i leaves the root on any axis.
    Vec3 numerical_gradient(const Vec3& x, double eps) const;

    // Weighted loss values over a batch; optionally accumulates exact
    // parameter gradients into the internal buffer (not zeroed here).
    LossValues compute_losses(const SampleBatch& batch, bool with_gradients);

    // Hash of every branch decision the loss takes on this batch (LeakyReLU
    // signs, L1 residual signs, Eikonal |norm - 1| signs). The
    // finite-difference oracle compares signatures at p-h and p+h and skips
    // parameters whose perturbation interval crosses a kink, where a central
    // difference does not estimate the subgradient.
    uint64_t kink_signature(const SampleBatch& batch) const;

    // zero grads -> accumulate all losses -> Adam update of both parameter
    // groups -> octree gradient clamp. Throws NonFiniteLoss.
    StepReport train_step(const SampleBatch& batch);

    // Full per-frame pipeline: sanitize, insert, keyframe decision, greedy
    // selection, iterate batches + steps.
    FrameReport process_frame(const Frame& frame);

    // Flat parameter access for finite-difference oracles and checkpointing.
    // Groups: 0 = octree values, 1 = octree gradients, 2 = net (MLP + hash).
    size_t group_size(int group) const;
    double get_param(int group, size_t idx) const;
    void set_param(int group, size_t idx, double v);
    const GradBuffer& gradients() const { return grads_; }
    void zero_gradients() {
        grads_.ensure(net_ ? net_->param_count() : 0, tree_.vertex_count());
        grads_.zero();
    }

    // Ablation / oracle seam: swaps the loss weighting in place.
    void set_loss_weights(const LossWeights& w) { cfg_.loss = w; }

    AdamMoments& moments_net() { return m_net_; }
    AdamMoments& moments_tree_d() { return m_tree_d_; }
    AdamMoments& moments_tree_g() { return m_tree_g_; }
    const AdamMoments& moments_net() const { return m_net_; }
    const AdamMoments& moments_tree_d() const { return m_tree_d_; }
    const AdamMoments& moments_tree_g() const { return m_tree_g_; }
    void set_counters(uint64_t step, uint32_t frames) {
        step_ = step;
        frames_processed_ = frames;
    }

    static uint64_t batch_seed(uint64_t run_seed, uint32_t frame_id, int iter);

   private:
    struct SampleRef;
    std::vector<SampleRef> make_sample_refs(const SampleBatch& batch) const;
    void accumulate_range(const SampleBatch& batch, const std::vector<SampleRef>& samples,
                          size_t begin, size_t end, size_t eik_sp_n, size_t eik_f_n,
                          bool with_gradients, GradBuffer* gb, LossValues* lv) const;
    void adam_update();

    RunConfig cfg_;
    SemiSparseOctree tree_;
    std::unique_ptr<ResidualNet> net_;
    KeyframeStore keyframes_;

    GradBuffer grads_;
    AdamMoments m_net_, m_tree_d_, m_tree_g_;
    uint64_t step_ = 0;
    uint32_t frames_processed_ = 0;
    int worker_threads_ = 1;
};

// Pulls frames from `next_frame` until it returns nullopt, training on each;
// invokes `on_frame` after every frame (logging, periodic checkpoints).
using FrameSource = std::function<std::optional<Frame>()>;
using FrameCallback = std::function<void(const FrameReport&, TrainState&)>;
void run_online(TrainState& state, const FrameSource& next_frame, const FrameCallback& on_frame);

}  // namespace gradsdf
