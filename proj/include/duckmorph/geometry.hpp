#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

namespace duckmorph {

// Millimeters unless stated otherwise.
struct Point3 {
    double x = 0, y = 0, z = 0;

    friend Point3 operator+(const Point3& a, const Point3& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
    friend Point3 operator-(const Point3& a, const Point3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
    friend Point3 operator*(const Point3& a, double s) { return {a.x * s, a.y * s, a.z * s}; }
    friend Point3 operator*(double s, const Point3& a) { return a * s; }
    friend bool operator==(const Point3&, const Point3&) = default;

    double dot(const Point3& o) const { return x * o.x + y * o.y + z * o.z; }
    double norm() const { return std::sqrt(dot(*this)); }
    bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

inline double squared_distance(const Point3& a, const Point3& b) {
    const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
    return dx * dx + dy * dy + dz * dz;
}

inline double dot(const Point3& a, const Point3& b) { return a.dot(b); }

inline Point3 cross(const Point3& a, const Point3& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

using Rgb = std::array<std::uint8_t, 3>;

// Ordered points; `colors` is either empty or parallel to `points`.
struct PointCloud {
    std::vector<Point3> points;
    std::vector<Rgb> colors;

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
    bool has_colors() const { return !colors.empty(); }
};

// Subset of a cloud in the given index order (colors follow their points).
inline PointCloud select(const PointCloud& cloud, const std::vector<std::size_t>& indices) {
    PointCloud out;
    out.points.reserve(indices.size());
    for (auto i : indices) out.points.push_back(cloud.points[i]);
    if (cloud.has_colors()) {
        out.colors.reserve(indices.size());
        for (auto i : indices) out.colors.push_back(cloud.colors[i]);
    }
    return out;
}

// Row-major 3x3 rotation plus translation: p' = R p + t.
struct RigidTransform {
    std::array<double, 9> rotation{1, 0, 0, 0, 1, 0, 0, 0, 1};
    Point3 translation{};

    Point3 apply(const Point3& p) const {
        const auto& r = rotation;
        return {r[0] * p.x + r[1] * p.y + r[2] * p.z + translation.x,
                r[3] * p.x + r[4] * p.y + r[5] * p.z + translation.y,
                r[6] * p.x + r[7] * p.y + r[8] * p.z + translation.z};
    }

    // Rotation about a unit axis by `angle` radians (Rodrigues).
    static RigidTransform axis_angle(Point3 axis, double angle, Point3 t = {}) {
        const double n = axis.norm();
        axis = axis * (1.0 / n);
        const double c = std::cos(angle), s = std::sin(angle), C = 1 - c;
        const double x = axis.x, y = axis.y, z = axis.z;
        RigidTransform r;
        r.rotation = {c + x * x * C,     x * y * C - z * s, x * z * C + y * s,
                      y * x * C + z * s, c + y * y * C,     y * z * C - x * s,
                      z * x * C - y * s, z * y * C + x * s, c + z * z * C};
        r.translation = t;
        return r;
    }
};

} // namespace duckmorph
