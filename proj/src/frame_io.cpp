#include "gradsdf/frame_io.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

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

}  // namespace

void write_frame(const std::string& path, const Frame& frame) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write frame file: " + path);
    os.write("NSDF", 4);
    put<uint32_t>(os, 1);
    put<double>(os, frame.origin.x);
    put<double>(os, frame.origin.y);
    put<double>(os, frame.origin.z);
    put<uint32_t>(os, uint32_t(frame.points.size()));
    for (const Vec3& p : frame.points) {
        put<float>(os, float(p.x));
        put<float>(os, float(p.y));
        put<float>(os, float(p.z));
    }
    if (!os) throw IoError("short write on frame file: " + path);
}

Frame read_frame(const std::string& path, uint32_t id) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open frame file: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "NSDF", 4) != 0)
        throw IoError("bad magic in frame file: " + path);
    const uint32_t version = get<uint32_t>(is);
    if (version != 1) throw IoError("unsupported frame file version in " + path);
    Frame frame;
    frame.id = id;
    frame.origin = {get<double>(is), get<double>(is), get<double>(is)};
    const uint32_t count = get<uint32_t>(is);
    frame.points.resize(count);
    for (uint32_t i = 0; i < count; ++i) {
        const float x = get<float>(is);
        const float y = get<float>(is);
        const float z = get<float>(is);
        frame.points[i] = {double(x), double(y), double(z)};
    }
    if (!is) throw IoError("truncated frame file: " + path);
    return frame;
}

void write_manifest(const std::string& path, const std::vector<std::string>& frame_files) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write manifest: " + path);
    for (const auto& f : frame_files) os << f << "\n";
}

std::vector<std::string> read_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open manifest: " + path);
    const std::filesystem::path dir = std::filesystem::path(path).parent_path();
    std::vector<std::string> out;
    std::string line;
    while (std::getline(is, line)) {
        line.erase(line.find_last_not_of(" \t\r") + 1);
        if (line.empty()) continue;
        std::filesystem::path p(line);
        out.push_back(p.is_absolute() ? p.string() : (dir / p).string());
    }
    return out;
}

}  // namespace gradsdf
