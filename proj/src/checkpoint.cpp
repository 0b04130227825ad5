#include "gradsdf/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace gradsdf {

namespace {

template <typename T>
void put(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}

void write_section(std::ostream& os, const std::string& name, const std::string& payload) {
    put<uint8_t>(os, uint8_t(name.size()));
    os.write(name.data(), name.size());
    put<uint64_t>(os, payload.size());
    os.write(payload.data(), payload.size());
}

}  // namespace

void save_checkpoint(const std::string& path, const TrainState& state) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write checkpoint: " + path);
    os.write("NSCK", 4);
    put<uint32_t>(os, 1);

    write_section(os, "META", serialize_config(state.config()));

    const SemiSparseOctree& tree = state.tree();
    {
        std::ostringstream p(std::ios::binary);
        const auto cells = tree.octant_cells();
        put<uint32_t>(p, uint32_t(cells.size()));
        for (const auto& depth : cells) {
            put<uint64_t>(p, depth.size());
            for (uint64_t c : depth) put<uint64_t>(p, c);
        }
        write_section(os, "TREE", p.str());
    }
    {
        std::ostringstream p(std::ios::binary);
        const OctreeConfig& oc = tree.config();
        put<uint32_t>(p, uint32_t(oc.depth));
        put<uint32_t>(p, uint32_t(oc.semi_sparse_depth));
        put<double>(p, oc.leaf_resolution);
        const Aabb root = oc.root();
        put<double>(p, root.min.x);
        put<double>(p, root.min.y);
        put<double>(p, root.min.z);
        put<double>(p, root.max.x);
        put<double>(p, root.max.y);
        put<double>(p, root.max.z);
        put<uint8_t>(p, uint8_t(oc.structure));
        put<uint64_t>(p, tree.vertex_count());
        const auto values = tree.values();
        const auto grads = tree.gradients();
        for (const auto& [key, slot] : tree.parameters()) {
            const auto k = unpack_key(key);
            put<int32_t>(p, k[0]);
            put<int32_t>(p, k[1]);
            put<int32_t>(p, k[2]);
            put<float>(p, float(values[slot]));
            put<float>(p, float(grads[3 * slot]));
            put<float>(p, float(grads[3 * slot + 1]));
            put<float>(p, float(grads[3 * slot + 2]));
        }
        write_section(os, "OCTREE", p.str());
    }
    if (const ResidualNet* net = state.net()) {
        {
            std::ostringstream p(std::ios::binary);
            const HashGridConfig& hc = net->hash_config();
            put<uint32_t>(p, uint32_t(hc.levels));
            const float* tables = net->params().data() + net->hash_offset();
            for (int l = 0; l < hc.levels; ++l) {
                put<uint32_t>(p, hc.table_size);
                put<uint32_t>(p, uint32_t(hc.features));
                p.write(reinterpret_cast<const char*>(tables +
                                                      size_t(l) * hc.table_size * hc.features),
                        std::streamsize(sizeof(float) * hc.table_size * hc.features));
            }
            write_section(os, "HASH", p.str());
        }
        {
            std::ostringstream p(std::ios::binary);
            put<uint32_t>(p, uint32_t(net->layers().size()));
            for (const auto& L : net->layers()) {
                put<uint32_t>(p, uint32_t(L.rows));
                put<uint32_t>(p, uint32_t(L.cols));
                p.write(reinterpret_cast<const char*>(net->params().data() + L.w_off),
                        std::streamsize(sizeof(float) * L.rows * L.cols));
                p.write(reinterpret_cast<const char*>(net->params().data() + L.b_off),
                        std::streamsize(sizeof(float) * L.rows));
            }
            write_section(os, "MLP", p.str());
        }
    }
    {
        // Optimizer state; tree moments in the same key-sorted order as OCTREE.
        std::ostringstream p(std::ios::binary);
        put<uint64_t>(p, state.global_step());
        put<uint64_t>(p, tree.vertex_count());
        auto at = [](const std::vector<double>& v, size_t i) { return i < v.size() ? v[i] : 0.0; };
        const auto values = tree.values();
        const auto grads = tree.gradients();
        for (const auto& [key, slot] : tree.parameters()) {
            (void)key;
            // f64 master copies (the public OCTREE section is rounded to f32).
            put<double>(p, values[slot]);
            for (int a = 0; a < 3; ++a) put<double>(p, grads[3 * slot + a]);
            put<double>(p, at(state.moments_tree_d().m, slot));
            put<double>(p, at(state.moments_tree_d().v, slot));
            for (int a = 0; a < 3; ++a) {
                put<double>(p, at(state.moments_tree_g().m, 3 * slot + a));
                put<double>(p, at(state.moments_tree_g().v, 3 * slot + a));
            }
        }
        put<uint64_t>(p, state.moments_net().m.size());
        p.write(reinterpret_cast<const char*>(state.moments_net().m.data()),
                std::streamsize(sizeof(double) * state.moments_net().m.size()));
        p.write(reinterpret_cast<const char*>(state.moments_net().v.data()),
                std::streamsize(sizeof(double) * state.moments_net().v.size()));
        write_section(os, "OPT", p.str());
    }
    {
        std::ostringstream p(std::ios::binary);
        put<uint32_t>(p, state.frames_processed());
        put<uint32_t>(p, uint32_t(state.keyframes().size()));
        for (const auto& e : state.keyframes().entries()) put<uint32_t>(p, e.frame.id);
        write_section(os, "RUN", p.str());
    }
    if (!os) throw IoError("short write on checkpoint: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "NSCK", 4) != 0)
        throw IoError("bad checkpoint magic in " + path);
    const uint32_t version = get<uint32_t>(is);
    if (version != 1) throw IoError("unsupported checkpoint version in " + path);

    LoadedCheckpoint out;
    bool have_meta = false;
    while (true) {
        const int len = is.get();
        if (len == EOF) break;
        std::string name(size_t(len), '\0');
        is.read(name.data(), len);
        const uint64_t size = get<uint64_t>(is);
        std::string payload(size, '\0');
        is.read(payload.data(), std::streamsize(size));
        if (!is) throw IoError("truncated checkpoint section " + name + " in " + path);
        std::istringstream p(payload, std::ios::binary);

        if (name == "META") {
            out.config = RunConfig{};
            apply_config_text(out.config, payload, path + "#META");
            out.state = std::make_unique<TrainState>(out.config);
            have_meta = true;
            continue;
        }
        if (!have_meta) throw IoError("checkpoint section " + name + " precedes META in " + path);

        if (name == "TREE") {
            const uint32_t depths = get<uint32_t>(p);
            std::vector<std::vector<uint64_t>> cells(depths);
            for (uint32_t d = 0; d < depths; ++d) {
                const uint64_t n = get<uint64_t>(p);
                cells[d].resize(n);
                for (uint64_t i = 0; i < n; ++i) cells[d][i] = get<uint64_t>(p);
            }
            out.state->tree().load_structure(cells);
        } else if (name == "OCTREE") {
            const uint32_t n_depth = get<uint32_t>(p);
            const uint32_t m_depth = get<uint32_t>(p);
            const double r = get<double>(p);
            for (int i = 0; i < 6; ++i) get<double>(p);  // root bounds (config echo)
            const uint8_t mode = get<uint8_t>(p);
            const OctreeConfig& oc = out.state->tree().config();
            if (int(n_depth) != oc.depth || int(m_depth) != oc.semi_sparse_depth ||
                r != oc.leaf_resolution || mode != uint8_t(oc.structure))
                throw IoError("checkpoint OCTREE section conflicts with META config in " + path);
            const uint64_t count = get<uint64_t>(p);
            if (count != out.state->tree().vertex_count())
                throw IoError("checkpoint vertex count does not match octant structure in " + path);
            for (uint64_t i = 0; i < count; ++i) {
                std::array<int32_t, 3> key;
                key[0] = get<int32_t>(p);
                key[1] = get<int32_t>(p);
                key[2] = get<int32_t>(p);
                const double d = double(get<float>(p));
                Vec3 g;
                g.x = double(get<float>(p));
                g.y = double(get<float>(p));
                g.z = double(get<float>(p));
                if (!out.state->tree().set_vertex_data(key, d, g))
                    throw IoError("checkpoint vertex key missing from structure in " + path);
            }
        } else if (name == "HASH") {
            ResidualNet* net = out.state->net();
            if (!net) throw IoError("checkpoint has HASH but residual is disabled in config");
            const uint32_t levels = get<uint32_t>(p);
            const HashGridConfig& hc = net->hash_config();
            if (int(levels) != hc.levels) throw IoError("checkpoint HASH level mismatch");
            float* tables = net->params().data() + net->hash_offset();
            for (uint32_t l = 0; l < levels; ++l) {
                const uint32_t T = get<uint32_t>(p);
                const uint32_t F = get<uint32_t>(p);
                if (T != hc.table_size || int(F) != hc.features)
                    throw IoError("checkpoint HASH shape mismatch");
                p.read(reinterpret_cast<char*>(tables + size_t(l) * T * F),
                       std::streamsize(sizeof(float) * T * F));
            }
        } else if (name == "MLP") {
            ResidualNet* net = out.state->net();
            if (!net) throw IoError("checkpoint has MLP but residual is disabled in config");
            const uint32_t layers = get<uint32_t>(p);
            if (layers != net->layers().size()) throw IoError("checkpoint MLP layer mismatch");
            for (const auto& L : net->layers()) {
                const uint32_t rows = get<uint32_t>(p);
                const uint32_t cols = get<uint32_t>(p);
                if (int(rows) != L.rows || int(cols) != L.cols)
                    throw IoError("checkpoint MLP shape mismatch");
                p.read(reinterpret_cast<char*>(net->params().data() + L.w_off),
                       std::streamsize(sizeof(float) * L.rows * L.cols));
                p.read(reinterpret_cast<char*>(net->params().data() + L.b_off),
                       std::streamsize(sizeof(float) * L.rows));
            }
        } else if (name == "OPT") {
            const uint64_t step = get<uint64_t>(p);
            const uint64_t count = get<uint64_t>(p);
            if (count != out.state->tree().vertex_count())
                throw IoError("checkpoint OPT vertex count mismatch");
            out.state->moments_tree_d().ensure(count);
            out.state->moments_tree_g().ensure(count * 3);
            auto values = out.state->tree().values();
            auto grads = out.state->tree().gradients();
            for (const auto& [key, slot] : out.state->tree().parameters()) {
                (void)key;
                values[slot] = get<double>(p);
                for (int a = 0; a < 3; ++a) grads[3 * slot + a] = get<double>(p);
                out.state->moments_tree_d().m[slot] = get<double>(p);
                out.state->moments_tree_d().v[slot] = get<double>(p);
                for (int a = 0; a < 3; ++a) {
                    out.state->moments_tree_g().m[3 * slot + a] = get<double>(p);
                    out.state->moments_tree_g().v[3 * slot + a] = get<double>(p);
                }
            }
            const uint64_t net_n = get<uint64_t>(p);
            out.state->moments_net().ensure(net_n);
            p.read(reinterpret_cast<char*>(out.state->moments_net().m.data()),
                   std::streamsize(sizeof(double) * net_n));
            p.read(reinterpret_cast<char*>(out.state->moments_net().v.data()),
                   std::streamsize(sizeof(double) * net_n));
            out.state->set_counters(step, out.frames_processed);
            out.has_optimizer_state = true;
        } else if (name == "RUN") {
            out.frames_processed = get<uint32_t>(p);
            const uint32_t kf = get<uint32_t>(p);
            out.keyframe_ids.resize(kf);
            for (uint32_t i = 0; i < kf; ++i) out.keyframe_ids[i] = get<uint32_t>(p);
            out.state->set_counters(out.state->global_step(), out.frames_processed);
        }
        // Unknown sections are skipped (payload already consumed).
    }
    if (!have_meta) throw IoError("checkpoint has no META section: " + path);
    return out;
}

void restore_keyframes(TrainState& state, const std::vector<uint32_t>& keyframe_ids,
                       const std::function<Frame(uint32_t)>& load_frame) {
    const Aabb root = state.config().octree.root();
    for (uint32_t id : keyframe_ids) {
        Frame raw = load_frame(id);
        Frame kept;
        kept.origin = raw.origin;
        kept.id = raw.id;
        for (const Vec3& p : raw.points)
            if (p.finite() && root.contains(p)) kept.points.push_back(p);
        std::vector<uint64_t> octants;
        octants.reserve(kept.points.size());
        for (const Vec3& p : kept.points) {
            const auto c = state.tree().leaf_cell(p);
            octants.push_back(pack_key(c[0], c[1], c[2]));
        }
        state.keyframes().restore_entry(std::move(kept), std::move(octants));
    }
}

}  // namespace gradsdf
