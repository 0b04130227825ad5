#include "gradsdf/config.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace gradsdf {

void RunConfig::validate() const {
    octree.validate();
    hash.validate();
    mlp.validate();
    if (sampling.total_rays < 1) throw ConfigError("sample.rays must be positive");
    if (sampling.n_free < 0 || sampling.n_perturb < 0)
        throw ConfigError("sample counts must be non-negative");
    if (!(sampling.free_margin > 0.0 && sampling.free_margin < 0.5))
        throw ConfigError("sample.free_margin must be in (0, 0.5)");
    if (!(sampling.perturb_sigma > 0.0)) throw ConfigError("sample.perturb_sigma must be positive");
    if (!(sampling.keyframe_min_iou >= 0.0 && sampling.keyframe_min_iou <= 1.0))
        throw ConfigError("sample.keyframe_min_iou must be in [0, 1]");
    if (sampling.keyframe_window < 1) throw ConfigError("sample.keyframe_window must be >= 1");
    if (train.iters_per_frame < 1) throw ConfigError("train.iters_per_frame must be >= 1");
    if (!(train.lr_net > 0.0 && train.lr_octree > 0.0))
        throw ConfigError("learning rates must be positive");
    if (!(train.fd_epsilon > 0.0)) throw ConfigError("train.fd_epsilon must be positive");
    if (!(eval.resolution > 0.0)) throw ConfigError("eval.resolution must be positive");
    if (!(loss.recon_surface >= 0 && loss.recon_perturb >= 0 && loss.eik_surface >= 0 &&
          loss.eik_free >= 0 && loss.proj >= 0))
        throw ConfigError("loss weights must be non-negative");
}

RunConfig profile_config(const std::string& name) {
    RunConfig cfg;  // defaults above are the paper values where the source material pins them
    if (name == "paper-defaults" || name.empty()) {
        return cfg;
    }
    if (name == "desk-scale") {
        cfg.octree.depth = 7;
        cfg.octree.semi_sparse_depth = 4;
        cfg.octree.leaf_resolution = 0.05;
        cfg.octree.root_min = {-1.6, -1.6, -1.6};
        cfg.hash.table_size = 1u << 17;
        cfg.sampling.total_rays = 2048;
        cfg.eval.resolution = 0.025;
        cfg.eval.padding = 0.10;
        return cfg;
    }
    throw ConfigError("unknown profile: " + name);
}

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct Field {
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

double to_double(const std::string& s) {
    size_t used = 0;
    const double v = std::stod(s, &used);
    while (used < s.size() && std::isspace(uint8_t(s[used]))) ++used;
    if (used != s.size()) throw ConfigError("bad number: '" + s + "'");
    return v;
}

int64_t to_int(const std::string& s) {
    size_t used = 0;
    const long long v = std::stoll(s, &used, 10);
    while (used < s.size() && std::isspace(uint8_t(s[used]))) ++used;
    if (used != s.size()) throw ConfigError("bad integer: '" + s + "'");
    return v;
}

const std::map<std::string, Field>& field_table() {
    static const std::map<std::string, Field> table = [] {
        std::map<std::string, Field> t;
        auto dbl = [&](const std::string& key, auto getter, auto setter) {
            t[key] = {[getter](const RunConfig& c) { return fmt_double(getter(c)); },
                      [setter](RunConfig& c, const std::string& v) { setter(c, to_double(v)); }};
        };
        auto num = [&](const std::string& key, auto getter, auto setter) {
            t[key] = {[getter](const RunConfig& c) { return std::to_string(getter(c)); },
                      [setter](RunConfig& c, const std::string& v) { setter(c, to_int(v)); }};
        };

        num("octree.depth", [](const RunConfig& c) { return int64_t(c.octree.depth); },
            [](RunConfig& c, int64_t v) { c.octree.depth = int(v); });
        num("octree.semi_sparse_depth",
            [](const RunConfig& c) { return int64_t(c.octree.semi_sparse_depth); },
            [](RunConfig& c, int64_t v) { c.octree.semi_sparse_depth = int(v); });
        dbl("octree.leaf_resolution",
            [](const RunConfig& c) { return c.octree.leaf_resolution; },
            [](RunConfig& c, double v) { c.octree.leaf_resolution = v; });
        dbl("octree.root_min_x", [](const RunConfig& c) { return c.octree.root_min.x; },
            [](RunConfig& c, double v) { c.octree.root_min.x = v; });
        dbl("octree.root_min_y", [](const RunConfig& c) { return c.octree.root_min.y; },
            [](RunConfig& c, double v) { c.octree.root_min.y = v; });
        dbl("octree.root_min_z", [](const RunConfig& c) { return c.octree.root_min.z; },
            [](RunConfig& c, double v) { c.octree.root_min.z = v; });
        t["octree.structure"] = {
            [](const RunConfig& c) {
                return std::string(c.octree.structure == OctreeStructure::SemiSparse ? "semi_sparse"
                                                                                     : "sparse");
            },
            [](RunConfig& c, const std::string& v) {
                if (v == "semi_sparse")
                    c.octree.structure = OctreeStructure::SemiSparse;
                else if (v == "sparse")
                    c.octree.structure = OctreeStructure::Sparse;
                else
                    throw ConfigError("octree.structure must be semi_sparse or sparse");
            }};
        t["octree.interp"] = {
            [](const RunConfig& c) { return std::string(c.interp_ga ? "ga" : "tl"); },
            [](RunConfig& c, const std::string& v) {
                if (v == "ga")
                    c.interp_ga = true;
                else if (v == "tl")
                    c.interp_ga = false;
                else
                    throw ConfigError("octree.interp must be ga or tl");
            }};
        dbl("octree.grad_clamp", [](const RunConfig& c) { return c.grad_clamp; },
            [](RunConfig& c, double v) { c.grad_clamp = v; });

        t["residual.enabled"] = {
            [](const RunConfig& c) { return std::string(c.residual_enabled ? "true" : "false"); },
            [](RunConfig& c, const std::string& v) {
                if (v == "true")
                    c.residual_enabled = true;
                else if (v == "false")
                    c.residual_enabled = false;
                else
                    throw ConfigError("residual.enabled must be true or false");
            }};
        num("residual.levels", [](const RunConfig& c) { return int64_t(c.hash.levels); },
            [](RunConfig& c, int64_t v) { c.hash.levels = int(v); });
        num("residual.features", [](const RunConfig& c) { return int64_t(c.hash.features); },
            [](RunConfig& c, int64_t v) { c.hash.features = int(v); });
        t["residual.resolutions"] = {
            [](const RunConfig& c) {
                std::string s;
                for (size_t i = 0; i < c.hash.resolutions.size(); ++i)
                    s += (i ? " " : "") + std::to_string(c.hash.resolutions[i]);
                return s;
            },
            [](RunConfig& c, const std::string& v) {
                std::istringstream iss(v);
                c.hash.resolutions.clear();
                int r;
                while (iss >> r) c.hash.resolutions.push_back(r);
                if (!iss.eof()) throw ConfigError("residual.resolutions: bad list");
                c.hash.levels = int(c.hash.resolutions.size());
            }};
        num("residual.table_size", [](const RunConfig& c) { return int64_t(c.hash.table_size); },
            [](RunConfig& c, int64_t v) { c.hash.table_size = uint32_t(v); });
        num("residual.hidden_layers", [](const RunConfig& c) { return int64_t(c.mlp.hidden_layers); },
            [](RunConfig& c, int64_t v) { c.mlp.hidden_layers = int(v); });
        num("residual.hidden_width", [](const RunConfig& c) { return int64_t(c.mlp.hidden_width); },
            [](RunConfig& c, int64_t v) { c.mlp.hidden_width = int(v); });
        dbl("residual.leaky_slope", [](const RunConfig& c) { return c.mlp.leaky_slope; },
            [](RunConfig& c, double v) { c.mlp.leaky_slope = v; });

        num("sample.rays", [](const RunConfig& c) { return int64_t(c.sampling.total_rays); },
            [](RunConfig& c, int64_t v) { c.sampling.total_rays = int(v); });
        dbl("sample.free_margin", [](const RunConfig& c) { return c.sampling.free_margin; },
            [](RunConfig& c, double v) { c.sampling.free_margin = v; });
        dbl("sample.perturb_sigma", [](const RunConfig& c) { return c.sampling.perturb_sigma; },
            [](RunConfig& c, double v) { c.sampling.perturb_sigma = v; });
        num("sample.n_free", [](const RunConfig& c) { return int64_t(c.sampling.n_free); },
            [](RunConfig& c, int64_t v) { c.sampling.n_free = int(v); });
        num("sample.n_perturb", [](const RunConfig& c) { return int64_t(c.sampling.n_perturb); },
            [](RunConfig& c, int64_t v) { c.sampling.n_perturb = int(v); });
        dbl("sample.keyframe_min_iou",
            [](const RunConfig& c) { return c.sampling.keyframe_min_iou; },
            [](RunConfig& c, double v) { c.sampling.keyframe_min_iou = v; });
        num("sample.keyframe_window",
            [](const RunConfig& c) { return int64_t(c.sampling.keyframe_window); },
            [](RunConfig& c, int64_t v) { c.sampling.keyframe_window = int(v); });

        dbl("loss.w_recon_surface", [](const RunConfig& c) { return c.loss.recon_surface; },
            [](RunConfig& c, double v) { c.loss.recon_surface = v; });
        dbl("loss.w_recon_perturb", [](const RunConfig& c) { return c.loss.recon_perturb; },
            [](RunConfig& c, double v) { c.loss.recon_perturb = v; });
        dbl("loss.w_eik_surface", [](const RunConfig& c) { return c.loss.eik_surface; },
            [](RunConfig& c, double v) { c.loss.eik_surface = v; });
        dbl("loss.w_eik_free", [](const RunConfig& c) { return c.loss.eik_free; },
            [](RunConfig& c, double v) { c.loss.eik_free = v; });
        dbl("loss.w_proj", [](const RunConfig& c) { return c.loss.proj; },
            [](RunConfig& c, double v) { c.loss.proj = v; });

        num("train.iters_per_frame",
            [](const RunConfig& c) { return int64_t(c.train.iters_per_frame); },
            [](RunConfig& c, int64_t v) { c.train.iters_per_frame = int(v); });
        dbl("train.lr_net", [](const RunConfig& c) { return c.train.lr_net; },
            [](RunConfig& c, double v) { c.train.lr_net = v; });
        dbl("train.lr_octree", [](const RunConfig& c) { return c.train.lr_octree; },
            [](RunConfig& c, double v) { c.train.lr_octree = v; });
        dbl("train.adam_beta1", [](const RunConfig& c) { return c.train.adam_beta1; },
            [](RunConfig& c, double v) { c.train.adam_beta1 = v; });
        dbl("train.adam_beta2", [](const RunConfig& c) { return c.train.adam_beta2; },
            [](RunConfig& c, double v) { c.train.adam_beta2 = v; });
        dbl("train.adam_eps", [](const RunConfig& c) { return c.train.adam_eps; },
            [](RunConfig& c, double v) { c.train.adam_eps = v; });
        dbl("train.fd_epsilon", [](const RunConfig& c) { return c.train.fd_epsilon; },
            [](RunConfig& c, double v) { c.train.fd_epsilon = v; });
        num("train.seed", [](const RunConfig& c) { return int64_t(c.train.seed); },
            [](RunConfig& c, int64_t v) { c.train.seed = uint64_t(v); });
        num("train.threads", [](const RunConfig& c) { return int64_t(c.train.threads); },
            [](RunConfig& c, int64_t v) { c.train.threads = int(v); });
        num("debug.inject_nan_step",
            [](const RunConfig& c) { return c.train.inject_nan_step; },
            [](RunConfig& c, int64_t v) { c.train.inject_nan_step = v; });

        dbl("eval.resolution", [](const RunConfig& c) { return c.eval.resolution; },
            [](RunConfig& c, double v) { c.eval.resolution = v; });
        dbl("eval.padding", [](const RunConfig& c) { return c.eval.padding; },
            [](RunConfig& c, double v) { c.eval.padding = v; });
        dbl("eval.near_min", [](const RunConfig& c) { return c.eval.near_min; },
            [](RunConfig& c, double v) { c.eval.near_min = v; });
        dbl("eval.near_max", [](const RunConfig& c) { return c.eval.near_max; },
            [](RunConfig& c, double v) { c.eval.near_max = v; });
        num("eval.mesh_samples", [](const RunConfig& c) { return int64_t(c.eval.mesh_samples); },
            [](RunConfig& c, int64_t v) { c.eval.mesh_samples = int(v); });
        dbl("eval.mesh_threshold", [](const RunConfig& c) { return c.eval.mesh_threshold; },
            [](RunConfig& c, double v) { c.eval.mesh_threshold = v; });
        return t;
    }();
    return table;
}

}  // namespace

void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin) {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    const auto& table = field_table();
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const size_t eq = line.find('=');
        std::string key = line.substr(0, eq == std::string::npos ? line.size() : eq);
        key.erase(0, key.find_first_not_of(" \t"));
        key.erase(key.find_last_not_of(" \t\r") + 1);
        if (key.empty()) continue;
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
        std::string value = line.substr(eq + 1);
        value.erase(0, value.find_first_not_of(" \t"));
        value.erase(value.find_last_not_of(" \t\r") + 1);
        auto it = table.find(key);
        if (it == table.end())
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
        try {
            it->second.set(cfg, value);
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config file: " + path);
    std::stringstream buf;
    buf << f.rdbuf();
    apply_config_text(cfg, buf.str(), path);
}

std::string serialize_config(const RunConfig& cfg) {
    std::string out;
    for (const auto& [key, field] : field_table()) {
        out += key;
        out += " = ";
        out += field.get(cfg);
        out += "\n";
    }
    return out;
}

}  // namespace gradsdf
