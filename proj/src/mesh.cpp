#include "gradsdf/mesh.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "gradsdf/rng.hpp"
#include "tables/mc_tables.hpp"

namespace gradsdf {

namespace {
Vec3 tri_cross(const Vec3& a, const Vec3& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

double tri_area(const Vec3& a, const Vec3& b, const Vec3& c) {
    return 0.5 * tri_cross(b - a, c - a).norm();
}
}  // namespace

double TriMesh::area() const {
    double s = 0.0;
    for (const auto& t : triangles)
        s += tri_area(vertices[t[0]], vertices[t[1]], vertices[t[2]]);
    return s;
}

Aabb TriMesh::bounds() const {
    Aabb b{vertices.at(0), vertices.at(0)};
    for (const Vec3& v : vertices) {
        b.min = {std::min(b.min.x, v.x), std::min(b.min.y, v.y), std::min(b.min.z, v.z)};
        b.max = {std::max(b.max.x, v.x), std::max(b.max.y, v.y), std::max(b.max.z, v.z)};
    }
    return b;
}

TriMesh extract_mesh(const BatchField& field, const SdfGridSpec& grid) {
    if (!(grid.resolution > 0.0) || !grid.bounds.valid())
        throw ConfigError("extract_mesh: bad grid spec");
    const Vec3 ext = grid.bounds.extent();
    const int nx = int(std::floor(ext.x / grid.resolution)) + 1;
    const int ny = int(std::floor(ext.y / grid.resolution)) + 1;
    const int nz = int(std::floor(ext.z / grid.resolution)) + 1;
    if (nx < 2 || ny < 2 || nz < 2) throw ConfigError("extract_mesh: grid too small");
    const double res = grid.resolution;

    auto node = [&](int i, int j, int k) {
        return Vec3{grid.bounds.min.x + res * i, grid.bounds.min.y + res * j,
                    grid.bounds.min.z + res * k};
    };

    // Two z-slabs of node values at a time.
    const size_t slab = size_t(nx) * ny;
    std::vector<double> v0(slab), v1(slab);
    std::vector<Vec3> pts(slab);
    auto fill_slab = [&](int k, std::vector<double>& dst) {
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i) pts[size_t(j) * nx + i] = node(i, j, k);
        field(pts, dst);
    };
    fill_slab(0, v0);

    // Cube corners in table order relative to cell (i, j, k).
    static constexpr int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                                          {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
    static constexpr int kEdgeEnds[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                                             {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

    TriMesh mesh;
    // Welds crossing vertices: key = canonical (node, node) pair of the edge.
    std::unordered_map<uint64_t, uint32_t> edge_vertex;
    auto node_id = [&](int i, int j, int k) {
        return uint64_t((size_t(k) * ny + j) * nx + i);
    };

    bool saw_negative = false, saw_positive = false;
    for (int k = 0; k + 1 < nz; ++k) {
        fill_slab(k + 1, v1);
        for (int j = 0; j + 1 < ny; ++j) {
            for (int i = 0; i + 1 < nx; ++i) {
                double val[8];
                uint64_t nid[8];
                int cube = 0;
                for (int c = 0; c < 8; ++c) {
                    const int ci = i + kCorner[c][0];
                    const int cj = j + kCorner[c][1];
                    const int ck = kCorner[c][2];
                    const double v = (ck ? v1 : v0)[size_t(cj) * nx + ci];
                    val[c] = v;
                    nid[c] = node_id(ci, cj, k + ck);
                    if (v < 0.0) {
                        cube |= 1 << c;
                        saw_negative = true;
                    } else {
                        saw_positive = true;
                    }
                }
                const int edges = mc_tables::kEdgeTable[cube];
                if (edges == 0) continue;

                uint32_t ev[12];
                for (int e = 0; e < 12; ++e) {
                    if (!(edges & (1 << e))) continue;
                    const int a = kEdgeEnds[e][0], b = kEdgeEnds[e][1];
                    const uint64_t ka = nid[a], kb = nid[b];
                    const uint64_t key = ka < kb ? (ka << 32 | kb) : (kb << 32 | ka);
                    auto it = edge_vertex.find(key);
                    if (it != edge_vertex.end()) {
                        ev[e] = it->second;
                        continue;
                    }
                    const double va = val[a], vb = val[b];
                    double t = va / (va - vb);  // linear zero crossing; va != vb by sign change
                    t = std::min(1.0, std::max(0.0, t));
                    const Vec3 pa = node(i + kCorner[a][0], j + kCorner[a][1], k + kCorner[a][2]);
                    const Vec3 pb = node(i + kCorner[b][0], j + kCorner[b][1], k + kCorner[b][2]);
                    const uint32_t idx = uint32_t(mesh.vertices.size());
                    mesh.vertices.push_back(pa + t * (pb - pa));
                    edge_vertex.emplace(key, idx);
                    ev[e] = idx;
                }
                const int* tri = mc_tables::kTriTable[cube];
                for (int t = 0; tri[t] != -1; t += 3) {
                    const uint32_t a = ev[tri[t]], b = ev[tri[t + 1]], c = ev[tri[t + 2]];
                    if (a == b || b == c || a == c) continue;
                    if (tri_area(mesh.vertices[a], mesh.vertices[b], mesh.vertices[c]) <= 1e-12)
                        continue;
                    mesh.triangles.push_back({a, b, c});
                }
            }
        }
        std::swap(v0, v1);
    }
    if (!saw_negative || !saw_positive)
        throw EmptyMesh("extract_mesh: field has no zero crossing on the grid");
    if (mesh.triangles.empty()) throw EmptyMesh("extract_mesh: no triangles produced");
    return mesh;
}

void write_ply(const std::string& path, const TriMesh& mesh) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write mesh: " + path);
    os << "ply\nformat binary_little_endian 1.0\n";
    os << "element vertex " << mesh.vertices.size() << "\n";
    os << "property float x\nproperty float y\nproperty float z\n";
    os << "element face " << mesh.triangles.size() << "\n";
    os << "property list uchar uint vertex_indices\nend_header\n";
    for (const Vec3& v : mesh.vertices) {
        const float f[3] = {float(v.x), float(v.y), float(v.z)};
        os.write(reinterpret_cast<const char*>(f), sizeof(f));
    }
    for (const auto& t : mesh.triangles) {
        const uint8_t n = 3;
        os.write(reinterpret_cast<const char*>(&n), 1);
        os.write(reinterpret_cast<const char*>(t.data()), sizeof(uint32_t) * 3);
    }
    if (!os) throw IoError("short write on mesh: " + path);
}

TriMesh read_ply(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open mesh: " + path);
    std::string line;
    size_t n_vertices = 0, n_faces = 0;
    bool binary_le = false;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ls(line);
        std::string tok;
        ls >> tok;
        if (tok == "format") {
            std::string fmt;
            ls >> fmt;
            binary_le = fmt == "binary_little_endian";
        } else if (tok == "element") {
            std::string what;
            size_t n;
            ls >> what >> n;
            if (what == "vertex") n_vertices = n;
            if (what == "face") n_faces = n;
        } else if (tok == "end_header") {
            break;
        }
    }
    if (!binary_le) throw IoError("read_ply: expected binary little-endian PLY: " + path);
    TriMesh mesh;
    mesh.vertices.resize(n_vertices);
    for (auto& v : mesh.vertices) {
        float f[3];
        is.read(reinterpret_cast<char*>(f), sizeof(f));
        v = {double(f[0]), double(f[1]), double(f[2])};
    }
    mesh.triangles.resize(n_faces);
    for (auto& t : mesh.triangles) {
        uint8_t n = 0;
        is.read(reinterpret_cast<char*>(&n), 1);
        if (n != 3) throw IoError("read_ply: non-triangle face in " + path);
        is.read(reinterpret_cast<char*>(t.data()), sizeof(uint32_t) * 3);
    }
    if (!is) throw IoError("read_ply: truncated file " + path);
    return mesh;
}

std::vector<Vec3> sample_surface(const TriMesh& mesh, int count, uint64_t seed) {
    std::vector<double> cum(mesh.triangles.size());
    double total = 0.0;
    for (size_t t = 0; t < mesh.triangles.size(); ++t) {
        const auto& tri = mesh.triangles[t];
        total += tri_area(mesh.vertices[tri[0]], mesh.vertices[tri[1]], mesh.vertices[tri[2]]);
        cum[t] = total;
    }
    if (total <= 0.0) throw EmptyMesh("sample_surface: zero-area mesh");

    SplitMix64 rng(seed);
    std::vector<Vec3> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) {
        const double pick = rng.uniform() * total;
        const size_t t = std::lower_bound(cum.begin(), cum.end(), pick) - cum.begin();
        const auto& tri = mesh.triangles[std::min(t, mesh.triangles.size() - 1)];
        const double r1 = std::sqrt(rng.uniform());
        const double r2 = rng.uniform();
        const Vec3& a = mesh.vertices[tri[0]];
        const Vec3& b = mesh.vertices[tri[1]];
        const Vec3& c = mesh.vertices[tri[2]];
        out.push_back(a * (1.0 - r1) + b * (r1 * (1.0 - r2)) + c * (r1 * r2));
    }
    return out;
}

}  // namespace gradsdf
