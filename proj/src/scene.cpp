#include "gradsdf/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "gradsdf/rng.hpp"

namespace gradsdf {

namespace {

double box_sdf(const Vec3& x, const Vec3& c, const Vec3& h) {
    const Vec3 q{std::abs(x.x - c.x) - h.x, std::abs(x.y - c.y) - h.y, std::abs(x.z - c.z) - h.z};
    const Vec3 qp{std::max(q.x, 0.0), std::max(q.y, 0.0), std::max(q.z, 0.0)};
    return qp.norm() + std::min(std::max(q.x, std::max(q.y, q.z)), 0.0);
}

// Unit gradient of the box SDF plus the internal medial gap (distance between
// the two nearest faces when inside; +inf outside where the projection is
// unique away from the surface).
struct BoxGrad {
    Vec3 g;
    double margin;
};

BoxGrad box_sdf_gradient(const Vec3& x, const Vec3& c, const Vec3& h) {
    const Vec3 d = x - c;
    const Vec3 q{std::abs(d.x) - h.x, std::abs(d.y) - h.y, std::abs(d.z) - h.z};
    const double mc = std::max(q.x, std::max(q.y, q.z));
    if (mc > 0.0) {
        // Outside: gradient points away from the (unique) clamped projection.
        const Vec3 qp{std::max(q.x, 0.0), std::max(q.y, 0.0), std::max(q.z, 0.0)};
        const double n = qp.norm();
        Vec3 g{qp.x * (d.x < 0 ? -1.0 : 1.0), qp.y * (d.y < 0 ? -1.0 : 1.0),
               qp.z * (d.z < 0 ? -1.0 : 1.0)};
        return {g / n, std::numeric_limits<double>::infinity()};
    }
    // Inside (or on the surface): nearest face wins; ties are medial.
    double f[3] = {-q.x, -q.y, -q.z};
    int a0 = 0;
    if (f[1] < f[a0]) a0 = 1;
    if (f[2] < f[a0]) a0 = 2;
    double second = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 3; ++i)
        if (i != a0) second = std::min(second, f[i]);
    Vec3 g{0, 0, 0};
    g.set(a0, d[a0] < 0 ? -1.0 : 1.0);
    return {g, second - f[a0]};
}

}  // namespace

double primitive_sdf(const Primitive& p, const Vec3& x) {
    switch (p.kind) {
        case Primitive::Kind::Sphere:
            return (x - p.center).norm() - p.radius;
        case Primitive::Kind::Box:
            return box_sdf(x, p.center, p.half);
        case Primitive::Kind::Room:
            return -box_sdf(x, p.center, p.half);
    }
    return 0.0;
}

double scene_sdf(const AnalyticScene& scene, const Vec3& x) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& p : scene.primitives) best = std::min(best, primitive_sdf(p, x));
    return best;
}

namespace {

struct PrimGrad {
    Vec3 g;
    double margin;
};

PrimGrad primitive_gradient(const Primitive& p, const Vec3& x) {
    switch (p.kind) {
        case Primitive::Kind::Sphere: {
            const Vec3 d = x - p.center;
            const double n = d.norm();
            if (n == 0.0) return {{0, 0, 0}, 0.0};
            return {d / n, n};  // medial point is the center itself
        }
        case Primitive::Kind::Box: {
            const BoxGrad bg = box_sdf_gradient(x, p.center, p.half);
            return {bg.g, bg.margin};
        }
        case Primitive::Kind::Room: {
            const BoxGrad bg = box_sdf_gradient(x, p.center, p.half);
            return {-bg.g, bg.margin};
        }
    }
    return {{0, 0, 0}, 0.0};
}

}  // namespace

double scene_medial_margin(const AnalyticScene& scene, const Vec3& x) {
    double d1 = std::numeric_limits<double>::infinity();
    double d2 = std::numeric_limits<double>::infinity();
    size_t arg = 0;
    for (size_t i = 0; i < scene.primitives.size(); ++i) {
        const double d = primitive_sdf(scene.primitives[i], x);
        if (d < d1) {
            d2 = d1;
            d1 = d;
            arg = i;
        } else if (d < d2) {
            d2 = d;
        }
    }
    double margin = d2 - d1;  // +inf with a single primitive
    margin = std::min(margin, primitive_gradient(scene.primitives[arg], x).margin);
    return margin;
}

std::optional<Vec3> scene_sdf_gradient(const AnalyticScene& scene, const Vec3& x, double tol) {
    double d1 = std::numeric_limits<double>::infinity();
    double d2 = std::numeric_limits<double>::infinity();
    size_t arg = 0;
    for (size_t i = 0; i < scene.primitives.size(); ++i) {
        const double d = primitive_sdf(scene.primitives[i], x);
        if (d < d1) {
            d2 = d1;
            d1 = d;
            arg = i;
        } else if (d < d2) {
            d2 = d;
        }
    }
    if (d2 - d1 < tol) return std::nullopt;
    const PrimGrad pg = primitive_gradient(scene.primitives[arg], x);
    if (pg.margin < tol) return std::nullopt;
    return pg.g;
}

std::vector<Frame> generate_frames(const AnalyticScene& scene, const std::vector<Vec3>& trajectory,
                                   int rays_per_frame, uint64_t seed, const Aabb& root) {
    constexpr int kMaxSteps = 256;
    constexpr double kHitTol = 1e-4;
    constexpr double kMinStep = 1e-5;

    std::vector<Frame> frames;
    frames.reserve(trajectory.size());
    for (size_t fi = 0; fi < trajectory.size(); ++fi) {
        const Vec3 o = trajectory[fi];
        if (scene_sdf(scene, o) <= 0.0)
            throw ConfigError("pose " + std::to_string(fi) + " is inside an obstacle");

        SplitMix64 rng(seed ^ uint64_t(fi));
        Frame frame;
        frame.origin = o;
        frame.id = uint32_t(fi);
        frame.points.reserve(rays_per_frame);
        for (int r = 0; r < rays_per_frame; ++r) {
            const Vec3 dir = rng.unit_vector();
            double t = 0.0;
            for (int step = 0; step < kMaxSteps; ++step) {
                const Vec3 x = o + t * dir;
                if (!root.contains(x)) break;
                const double d = scene_sdf(scene, x);
                if (std::abs(d) < kHitTol) {
                    frame.points.push_back(x);
                    break;
                }
                t += std::max(d, kMinStep);
            }
        }
        if (frame.points.empty())
            throw EmptyFrame("pose " + std::to_string(fi) + " produced no surface hits");
        frames.push_back(std::move(frame));
    }
    return frames;
}

namespace {

std::vector<double> parse_numbers(const std::string& s) {
    std::vector<double> out;
    std::istringstream iss(s);
    double v;
    while (iss >> v) out.push_back(v);
    if (!iss.eof()) throw ConfigError("bad numeric field: '" + s + "'");
    return out;
}

}  // namespace

SceneFile parse_scene_text(const std::string& text, const std::string& origin_name) {
    SceneFile sf;
    bool have_min = false, have_max = false;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const size_t eq = line.find('=');
        auto fail = [&](const std::string& msg) {
            throw ConfigError(origin_name + ":" + std::to_string(lineno) + ": " + msg);
        };
        std::string key = line.substr(0, eq == std::string::npos ? line.size() : eq);
        key.erase(0, key.find_first_not_of(" \t"));
        key.erase(key.find_last_not_of(" \t\r") + 1);
        if (key.empty()) continue;
        if (eq == std::string::npos) fail("expected 'key = value'");
        const std::vector<double> v = parse_numbers(line.substr(eq + 1));

        if (key == "root_min" || key == "root_max") {
            if (v.size() != 3) fail(key + " needs 3 numbers");
            (key == "root_min" ? sf.root.min : sf.root.max) = {v[0], v[1], v[2]};
            (key == "root_min" ? have_min : have_max) = true;
        } else if (key == "pose") {
            if (v.size() != 3) fail("pose needs 3 numbers");
            sf.trajectory.push_back({v[0], v[1], v[2]});
        } else if (key == "sphere") {
            if (v.size() != 4) fail("sphere needs 4 numbers (cx cy cz radius)");
            if (v[3] <= 0) fail("sphere radius must be positive");
            Primitive p;
            p.kind = Primitive::Kind::Sphere;
            p.center = {v[0], v[1], v[2]};
            p.radius = v[3];
            sf.scene.primitives.push_back(p);
        } else if (key == "box" || key == "room") {
            if (v.size() != 6) fail(key + " needs 6 numbers (cx cy cz hx hy hz)");
            if (v[3] <= 0 || v[4] <= 0 || v[5] <= 0) fail(key + " half-extents must be positive");
            Primitive p;
            p.kind = key == "box" ? Primitive::Kind::Box : Primitive::Kind::Room;
            p.center = {v[0], v[1], v[2]};
            p.half = {v[3], v[4], v[5]};
            sf.scene.primitives.push_back(p);
        } else {
            fail("unknown key '" + key + "'");
        }
    }
    if (!have_min || !have_max) throw ConfigError(origin_name + ": missing root_min/root_max");
    if (!sf.root.valid()) throw ConfigError(origin_name + ": root_min must be <= root_max");
    if (sf.scene.primitives.empty()) throw ConfigError(origin_name + ": no primitives");
    for (size_t i = 0; i < sf.trajectory.size(); ++i) {
        if (scene_sdf(sf.scene, sf.trajectory[i]) <= 0.0)
            throw ConfigError(origin_name + ": pose " + std::to_string(i) +
                              " is inside an obstacle");
        if (!sf.root.contains(sf.trajectory[i]))
            throw ConfigError(origin_name + ": pose " + std::to_string(i) + " is outside root");
    }
    return sf;
}

SceneFile parse_scene_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open scene file: " + path);
    std::stringstream buf;
    buf << f.rdbuf();
    return parse_scene_text(buf.str(), path);
}

}  // namespace gradsdf
