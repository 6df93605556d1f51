#include "duckmorph/geomfeat.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "duckmorph/errors.hpp"

namespace duckmorph::geomfeat {

double distance(const Point3& p, const Point3& q) { return (p - q).norm(); }

double angle(const Point3& p, const Point3& vertex, const Point3& q) {
    const Point3 u = p - vertex, v = q - vertex;
    const double nu = u.norm(), nv = v.norm();
    if (nu < kDegenerateTolerance || nv < kDegenerateTolerance) {
        throw DegenerateGeometryError("angle undefined: a point coincides with the vertex");
    }
    const double c = std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0);
    return std::acos(c);
}

void validate(const KeypointSet& k) {
    for (std::size_t i = 0; i < kKeypointCount; ++i) {
        if (!k[i].finite()) {
            throw ValidationError(std::string("keypoint ") + kKeypointLabels[i] + " is not finite");
        }
    }
}

GeometricFeatures extract_features(const KeypointSet& k) {
    validate(k);
    GeometricFeatures f;
    for (std::size_t i = 0; i < 6; ++i) f.values[i] = distance(k[i], k[i + 1]);
    for (std::size_t i = 0; i < 4; ++i) {
        try {
            f.values[6 + i] = angle(k[i], k[i + 1], k[i + 2]);
        } catch (const DegenerateGeometryError&) {
            throw DegenerateGeometryError(std::string("angle ") + kKeypointLabels[i] +
                                          kKeypointLabels[i + 1] + kKeypointLabels[i + 2] +
                                          " is degenerate: a point coincides with vertex " +
                                          kKeypointLabels[i + 1]);
        }
    }
    return f;
}

} // namespace duckmorph::geomfeat
