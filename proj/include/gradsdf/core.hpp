#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace gradsdf {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    constexpr double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
    Vec3 operator-() const { return {-x, -y, -z}; }
    Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
    Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }

    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    double norm_sq() const { return dot(*this); }
    double norm() const { return std::sqrt(norm_sq()); }
    Vec3 normalized() const { double n = norm(); return {x / n, y / n, z / n}; }
    bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }

    void set(int i, double v) { (i == 0 ? x : (i == 1 ? y : z)) = v; }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

// Points and directions share one representation; the distinction is carried
// by the variable, not the type.
using Point3 = Vec3;

struct Aabb {
    Vec3 min, max;

    bool contains(const Vec3& p) const {
        return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y &&
               p.z >= min.z && p.z <= max.z;
    }
    Vec3 extent() const { return max - min; }
    Vec3 center() const { return (min + max) * 0.5; }
    bool valid() const {
        return min.finite() && max.finite() && min.x <= max.x && min.y <= max.y && min.z <= max.z;
    }
    Aabb intersect(const Aabb& o) const {
        return {{std::max(min.x, o.min.x), std::max(min.y, o.min.y), std::max(min.z, o.min.z)},
                {std::min(max.x, o.max.x), std::min(max.y, o.max.y), std::min(max.z, o.max.z)}};
    }
};

// Integer lattice key, packed 21 bits per component (non-negative coordinates).
inline uint64_t pack_key(int32_t x, int32_t y, int32_t z) {
    return (uint64_t(uint32_t(x)) & 0x1FFFFF) | ((uint64_t(uint32_t(y)) & 0x1FFFFF) << 21) |
           ((uint64_t(uint32_t(z)) & 0x1FFFFF) << 42);
}
inline std::array<int32_t, 3> unpack_key(uint64_t k) {
    return {int32_t(k & 0x1FFFFF), int32_t((k >> 21) & 0x1FFFFF), int32_t((k >> 42) & 0x1FFFFF)};
}

struct OutOfBounds : std::runtime_error {
    explicit OutOfBounds(const std::string& what) : std::runtime_error(what) {}
};

struct NonFiniteLoss : std::runtime_error {
    explicit NonFiniteLoss(const std::string& what) : std::runtime_error(what) {}
};

struct EmptyMesh : std::runtime_error {
    explicit EmptyMesh(const std::string& what) : std::runtime_error(what) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace gradsdf
