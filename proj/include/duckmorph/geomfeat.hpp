#pragma once

#include <array>
#include <string_view>

#include "duckmorph/geometry.hpp"

namespace duckmorph::geomfeat {

inline constexpr std::size_t kKeypointCount = 7;
inline constexpr std::array<char, kKeypointCount> kKeypointLabels{'A', 'B', 'C', 'D', 'E', 'F', 'G'};

// Anatomical landmarks, in label order:
//   A beak tip, B head peak, C neck curve apex, D neck/chest junction,
//   E tail tip, F top of foot, G bottom of foot.
struct KeypointSet {
    std::array<Point3, kKeypointCount> points{};

    Point3& operator[](std::size_t i) { return points[i]; }
    const Point3& operator[](std::size_t i) const { return points[i]; }
};

inline constexpr std::size_t kFeatureCount = 10;

// Feature order is a frozen contract: six distances then four angles.
inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames{
    "d_AB", "d_BC", "d_CD", "d_DE", "d_EF", "d_FG", "a_ABC", "a_BCD", "a_CDE", "a_DEF"};

// Distances in millimeters, angles in radians.
struct GeometricFeatures {
    std::array<double, kFeatureCount> values{};

    double distance(std::size_t i) const { return values[i]; }
    double angle(std::size_t i) const { return values[6 + i]; }
};

inline constexpr double kDegenerateTolerance = 1e-9; // mm

double distance(const Point3& p, const Point3& q);

// Angle at `vertex` between the rays to p and q, in [0, pi]. Throws
// DegenerateGeometryError when either ray is shorter than 1e-9 mm.
double angle(const Point3& p, const Point3& vertex, const Point3& q);

void validate(const KeypointSet& k);

GeometricFeatures extract_features(const KeypointSet& k);

} // namespace duckmorph::geomfeat
