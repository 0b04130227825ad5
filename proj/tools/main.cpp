// gradsdf command line: synthetic-scene generation, online training,
// mesh/slice export, metric evaluation, and the interpolation-prior study.

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include "gradsdf/checkpoint.hpp"
#include "gradsdf/frame_io.hpp"
#include "gradsdf/log.hpp"
#include "gradsdf/metrics.hpp"
#include "gradsdf/study.hpp"

namespace fs = std::filesystem;
using namespace gradsdf;

namespace {

struct CommonOpts {
    std::string profile = "desk-scale";
    std::string config;
    int64_t seed = -1;
};

RunConfig resolve_config(const CommonOpts& o) {
    RunConfig cfg = profile_config(o.profile);
    if (!o.config.empty()) apply_config_file(cfg, o.config);
    if (o.seed >= 0) cfg.train.seed = uint64_t(o.seed);
    cfg.validate();
    return cfg;
}

BatchField field_of(const TrainState& state) {
    return [&state](std::span<const Vec3> pts, std::span<double> out) {
        state.predict_batch(pts, out);
    };
}

BatchField field_of(const AnalyticScene& scene) {
    return [scene](std::span<const Vec3> pts, std::span<double> out) {
        for (size_t i = 0; i < pts.size(); ++i) out[i] = scene_sdf(scene, pts[i]);
    };
}

int cmd_synth(const std::string& scene_path, const std::string& out_dir, int rays, uint64_t seed) {
    const SceneFile sf = parse_scene_file(scene_path);
    if (sf.trajectory.empty()) throw ConfigError(scene_path + ": no poses");
    fs::create_directories(out_dir);
    const auto frames = generate_frames(sf.scene, sf.trajectory, rays, seed, sf.root);
    std::vector<std::string> names;
    char buf[32];
    for (const Frame& f : frames) {
        std::snprintf(buf, sizeof(buf), "frame_%05u.nsdf", f.id);
        write_frame((fs::path(out_dir) / buf).string(), f);
        names.emplace_back(buf);
    }
    write_manifest((fs::path(out_dir) / "frames.txt").string(), names);
    log::info("wrote " + std::to_string(frames.size()) + " frames to " + out_dir);
    return 0;
}

int cmd_run(const CommonOpts& common, const std::string& manifest, const std::string& out_dir,
            const std::string& resume_from, int every, const std::string& dump_dir) {
    const std::vector<std::string> frame_paths = read_manifest(manifest);
    if (frame_paths.empty()) throw ConfigError("manifest lists no frames: " + manifest);
    fs::create_directories(out_dir);

    std::unique_ptr<TrainState> state;
    uint32_t start = 0;
    if (!resume_from.empty()) {
        LoadedCheckpoint loaded = load_checkpoint(resume_from);
        if (!loaded.has_optimizer_state)
            throw IoError("checkpoint lacks optimizer state; cannot resume: " + resume_from);
        restore_keyframes(*loaded.state, loaded.keyframe_ids, [&](uint32_t id) {
            if (id >= frame_paths.size())
                throw IoError("checkpoint keyframe id beyond manifest length");
            return read_frame(frame_paths[id], id);
        });
        start = loaded.frames_processed;
        state = std::move(loaded.state);
        log::info("resumed at frame " + std::to_string(start) + " from " + resume_from);
        if (!common.config.empty())
            log::warn("--config ignored on resume; the checkpoint carries its configuration");
    } else {
        state = std::make_unique<TrainState>(resolve_config(common));
    }

    std::ofstream train_log((fs::path(out_dir) / "train_log.txt").string(),
                            start == 0 ? std::ios::trunc : std::ios::app);
    if (!train_log) throw IoError("cannot write train log in " + out_dir);
    if (!dump_dir.empty()) fs::create_directories(dump_dir);

    uint32_t next = start;
    const FrameSource source = [&]() -> std::optional<Frame> {
        if (next >= frame_paths.size()) return std::nullopt;
        const uint32_t id = next++;
        return read_frame(frame_paths[id], id);
    };
    const FrameCallback on_frame = [&](const FrameReport& r, TrainState& st) {
        std::ostringstream line;
        line << "frame_id=" << r.frame_id << " points=" << r.points
             << " dropped=" << r.dropped_points << " octants_created=" << r.octants_created
             << " vertices_created=" << r.vertices_created
             << " keyframe=" << (r.keyframe_inserted ? 1 : 0)
             << " keyframes=" << r.keyframes_total << " loss_recon=" << r.last_loss.recon
             << " loss_eik=" << r.last_loss.eik << " loss_proj=" << r.last_loss.proj
             << " wall_ms=" << r.wall_ms;
        if (r.skipped) line << " skipped=1";
        train_log << line.str() << "\n";
        train_log.flush();
        log::info(line.str());
        if (r.skipped)
            log::warn("frame " + std::to_string(r.frame_id) + " skipped (no usable points)");
        if (!dump_dir.empty() && !r.skipped) {
            // Batch generation is a pure function of the seed: reproduce this
            // frame's first batch and dump it.
            const auto selected = st.keyframes().select(st.config().sampling.keyframe_window);
            std::vector<const Frame*> fptrs;
            for (size_t idx : selected) fptrs.push_back(&st.keyframes().entries()[idx].frame);
            const SampleBatch b =
                generate_batch(fptrs, st.config().sampling, st.config().octree.root(),
                               TrainState::batch_seed(st.config().train.seed, r.frame_id, 0));
            char buf[48];
            std::snprintf(buf, sizeof(buf), "batch_f%05u.nsbt", r.frame_id);
            write_batch_dump((fs::path(dump_dir) / buf).string(), b);
        }
        if (every > 0 && st.frames_processed() % uint32_t(every) == 0 &&
            st.frames_processed() < frame_paths.size()) {
            char buf[48];
            std::snprintf(buf, sizeof(buf), "checkpoint_f%05u.nsck", st.frames_processed());
            save_checkpoint((fs::path(out_dir) / buf).string(), st);
        }
    };

    run_online(*state, source, on_frame);
    save_checkpoint((fs::path(out_dir) / "checkpoint.nsck").string(), *state);
    log::info("final checkpoint: " + (fs::path(out_dir) / "checkpoint.nsck").string());
    return 0;
}

int cmd_mesh(const std::string& ckpt, const std::string& out, double res) {
    LoadedCheckpoint loaded = load_checkpoint(ckpt);
    const Aabb root = loaded.config.octree.root();
    if (res <= 0) res = loaded.config.eval.resolution;
    const TriMesh mesh = extract_mesh(field_of(*loaded.state), {root, res});
    write_ply(out, mesh);
    log::info("mesh: " + std::to_string(mesh.vertices.size()) + " vertices, " +
              std::to_string(mesh.triangles.size()) + " triangles -> " + out);
    return 0;
}

int cmd_slice(const std::string& ckpt, const std::string& out, double z, double res) {
    LoadedCheckpoint loaded = load_checkpoint(ckpt);
    const Aabb root = loaded.config.octree.root();
    if (res <= 0) res = loaded.config.eval.resolution;
    const uint32_t nx = uint32_t((root.max.x - root.min.x) / res);
    const uint32_t ny = uint32_t((root.max.y - root.min.y) / res);
    if (z < root.min.z || z > root.max.z) throw ConfigError("--z outside the model root");
    write_slice(out, field_of(*loaded.state), {root.min.x, root.min.y, 0.0}, z, nx, ny, res);
    log::info("slice -> " + out);
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& scene_path, const std::string& report,
             bool oracle_shim, double res) {
    const SceneFile sf = parse_scene_file(scene_path);
    LoadedCheckpoint loaded = load_checkpoint(ckpt);
    EvalConfig eval = loaded.config.eval;
    if (res > 0) eval.resolution = res;
    const Aabb root = loaded.config.octree.root();

    // Ground-truth bounds come from the oracle-extracted surface.
    const TriMesh gt_mesh = extract_mesh(field_of(sf.scene), {root, eval.resolution});
    const SdfGridSpec grid = eval_grid_for(gt_mesh.bounds(), root, eval);

    FieldWithGradient model{oracle_shim ? field_of(sf.scene) : field_of(*loaded.state),
                            loaded.config.train.fd_epsilon, root};
    const SdfFieldMetrics sdf = eval_sdf_field(model, sf.scene, grid, eval);

    const TriMesh recon = extract_mesh(
        oracle_shim ? field_of(sf.scene) : field_of(*loaded.state), {root, eval.resolution});
    const MeshMetrics mesh =
        mesh_metrics(recon, gt_mesh, eval.mesh_samples, eval.mesh_threshold,
                     loaded.config.train.seed);

    std::ostringstream os;
    write_mesh_metrics(os, mesh);
    write_sdf_metrics(os, sdf);
    if (report.empty()) {
        std::fputs(os.str().c_str(), stdout);
    } else {
        std::ofstream f(report);
        if (!f) throw IoError("cannot write report: " + report);
        f << os.str();
        log::info("report -> " + report);
    }
    return 0;
}

int cmd_study(const CommonOpts& common, const std::string& scene_path, const std::string& out_csv,
              int poses, int rays, double grid_res) {
    // Built-in study scene: four spheres in the desk-scale root.
    static const char* kDefaultStudyScene =
        "root_min = -1.6 -1.6 -1.6\n"
        "root_max = 1.6 1.6 1.6\n"
        "sphere = 0.7 0.7 0.0 0.42\n"
        "sphere = -0.7 0.65 0.15 0.36\n"
        "sphere = -0.6 -0.7 -0.1 0.4\n"
        "sphere = 0.65 -0.65 0.2 0.3\n";
    SceneFile sf = scene_path.empty() ? parse_scene_text(kDefaultStudyScene, "<built-in>")
                                      : parse_scene_file(scene_path);
    RunConfig cfg = resolve_config(common);
    if (sf.trajectory.empty()) {
        for (int i = 0; i < poses; ++i) {
            const double th = 6.283185307179586 * double(i) / double(poses);
            sf.trajectory.push_back(
                {1.35 * std::cos(th), 1.35 * std::sin(th), 0.5 * std::sin(3.0 * th)});
        }
        for (const Vec3& p : sf.trajectory)
            if (scene_sdf(sf.scene, p) <= 0.0)
                throw ConfigError("generated study pose inside an obstacle; pass --scene with poses");
    }
    const auto frames =
        generate_frames(sf.scene, sf.trajectory, rays, cfg.train.seed, cfg.octree.root());
    if (grid_res <= 0) grid_res = cfg.eval.resolution;
    const Vec3 pad{0.2, 0.2, 0.2};
    const Aabb box{sf.root.min + pad, sf.root.max - pad};
    const PriorStudyResult r = prior_study(sf.scene, frames, cfg.octree,
                                           {box.intersect(cfg.octree.root()), grid_res}, cfg.eval);

    const std::string csv = study_csv(r);
    if (out_csv.empty()) {
        std::fputs(csv.c_str(), stdout);
    } else {
        std::ofstream f(out_csv);
        if (!f) throw IoError("cannot write study csv: " + out_csv);
        f << csv;
        log::info("study -> " + out_csv);
    }
    log::info("bound audit: " + std::to_string(r.bound_octants_audited) + " octants, " +
              std::to_string(r.bound_violations) + " violations, max ratio " +
              std::to_string(r.bound_max_ratio));
    return r.bound_violations == 0 ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Online Euclidean SDF reconstruction: gradient-augmented octree prior plus a "
                 "neural residual"};
    app.require_subcommand(1);

    CommonOpts common;
    std::string scene, out, manifest, checkpoint, report, dump_dir;
    int rays = 512, every = 0, poses = 16;
    double z = 0.0, res = 0.0;
    bool oracle_shim = false;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--profile", common.profile,
                        "config profile (paper-defaults | desk-scale)");
        cmd->add_option("--config", common.config, "config file overlay");
        cmd->add_option("--seed", common.seed, "run seed override");
    };

    CLI::App* synth = app.add_subcommand("synth", "generate frames from a scene file");
    synth->add_option("--scene", scene, "scene description file")->required();
    synth->add_option("--out", out, "output directory")->required();
    synth->add_option("--rays", rays, "rays per pose");
    synth->add_option("--seed", common.seed, "generator seed");

    CLI::App* run = app.add_subcommand("run", "online training over a frame stream");
    run->add_option("--frames", manifest, "frame manifest")->required();
    run->add_option("--out", out, "output directory")->required();
    run->add_option("--checkpoint", checkpoint, "resume from checkpoint");
    run->add_option("--every", every, "write a checkpoint every k frames");
    run->add_option("--dump-batches", dump_dir, "dump each frame's first batch here");
    add_common(run);

    CLI::App* mesh = app.add_subcommand("mesh", "extract the zero level set as PLY");
    mesh->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
    mesh->add_option("--out", out, "output .ply")->required();
    mesh->add_option("--res", res, "grid resolution (m)");

    CLI::App* slice = app.add_subcommand("slice", "export a z-plane slice of the SDF");
    slice->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
    slice->add_option("--out", out, "output .nslc")->required();
    slice->add_option("--z", z, "slice plane height (m)")->required();
    slice->add_option("--res", res, "pixel resolution (m)");

    CLI::App* eval = app.add_subcommand("eval", "mesh + SDF metrics against the analytic oracle");
    eval->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
    eval->add_option("--scene", scene, "scene file (the oracle)")->required();
    eval->add_option("--report", report, "report file (stdout when omitted)");
    eval->add_option("--res", res, "evaluation grid resolution (m)");
    eval->add_flag("--oracle-shim", oracle_shim, "evaluate the oracle against itself");

    CLI::App* study = app.add_subcommand("study", "interpolation-prior comparison table");
    study->add_option("--scene", scene, "scene file (default: built-in sphere scene)");
    study->add_option("--out", out, "output CSV (stdout when omitted)");
    study->add_option("--poses", poses, "poses when the scene has no trajectory");
    study->add_option("--rays", rays, "rays per pose");
    study->add_option("--res", res, "study grid resolution (m)");
    add_common(study);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (synth->parsed())
            return cmd_synth(scene, out, rays, common.seed >= 0 ? uint64_t(common.seed) : 1);
        if (run->parsed()) return cmd_run(common, manifest, out, checkpoint, every, dump_dir);
        if (mesh->parsed()) return cmd_mesh(checkpoint, out, res);
        if (slice->parsed()) return cmd_slice(checkpoint, out, z, res);
        if (eval->parsed()) return cmd_eval(checkpoint, scene, report, oracle_shim, res);
        if (study->parsed()) return cmd_study(common, scene, out, poses, rays, res);
    } catch (const ConfigError& e) {
        log::error(e.what());
        return 1;
    } catch (const NonFiniteLoss& e) {
        log::error(std::string("training aborted: ") + e.what());
        return 2;
    } catch (const std::exception& e) {
        log::error(e.what());
        return 2;
    }
    return 1;
}
