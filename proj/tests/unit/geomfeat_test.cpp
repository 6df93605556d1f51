#include <gtest/gtest.h>

#include <numbers>

#include "duckmorph/errors.hpp"
#include "duckmorph/geomfeat.hpp"
#include "duckmorph/rng.hpp"

using namespace duckmorph;
using namespace duckmorph::geomfeat;

namespace {

KeypointSet random_keypoints(Rng& rng) {
    KeypointSet k;
    for (auto& p : k.points) p = {rng.uniform(-200, 200), rng.uniform(-200, 200), rng.uniform(-200, 200)};
    return k;
}

} // namespace

TEST(Features, RightAngleAndUnitDistances) {
    KeypointSet k;
    k[0] = {1, 0, 0};
    k[1] = {0, 0, 0};
    k[2] = {0, 1, 0};
    k[3] = {0, 2, 0};
    k[4] = {0, 3, 0};
    k[5] = {0, 4, 0};
    k[6] = {0, 5, 0};
    auto f = extract_features(k);
    EXPECT_DOUBLE_EQ(f.distance(0), 1.0);
    EXPECT_NEAR(f.angle(0), std::numbers::pi / 2, 1e-15);
    EXPECT_NEAR(f.angle(1), std::numbers::pi, 1e-7);
}

TEST(Features, NamesAreInContractOrder) {
    EXPECT_EQ(kFeatureNames[0], "d_AB");
    EXPECT_EQ(kFeatureNames[5], "d_FG");
    EXPECT_EQ(kFeatureNames[6], "a_ABC");
    EXPECT_EQ(kFeatureNames[9], "a_DEF");
}

TEST(Features, CollinearAnglesArePiOrZero) {
    EXPECT_NEAR(angle({-1, 0, 0}, {0, 0, 0}, {1, 0, 0}), std::numbers::pi, 1e-12);
    EXPECT_NEAR(angle({1, 0, 0}, {0, 0, 0}, {2, 0, 0}), 0.0, 1e-7);
}

TEST(Features, CoincidentVertexNamesTheAngle) {
    Rng rng(1);
    auto k = random_keypoints(rng);
    k[2] = k[1];
    try {
        extract_features(k);
        FAIL() << "expected DegenerateGeometryError";
    } catch (const DegenerateGeometryError& e) {
        EXPECT_NE(std::string(e.what()).find("ABC"), std::string::npos);
    }
}

TEST(Features, NonFiniteKeypointIsValidationError) {
    Rng rng(1);
    auto k = random_keypoints(rng);
    k[4].y = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(extract_features(k), ValidationError);
}

TEST(Features, InvariantUnderRigidMotion) {
    Rng rng(2);
    for (int t = 0; t < 100; ++t) {
        auto k = random_keypoints(rng);
        auto m = RigidTransform::axis_angle({rng.normal(), rng.normal(), rng.normal()}, rng.uniform(-3.14, 3.14),
                                            {rng.uniform(-1e3, 1e3), rng.uniform(-1e3, 1e3), rng.uniform(-1e3, 1e3)});
        KeypointSet moved;
        for (std::size_t i = 0; i < kKeypointCount; ++i) moved[i] = m.apply(k[i]);
        auto a = extract_features(k), b = extract_features(moved);
        for (std::size_t i = 0; i < kFeatureCount; ++i) EXPECT_NEAR(a.values[i], b.values[i], 1e-6);
    }
}

TEST(Features, ScalingScalesDistancesOnly) {
    Rng rng(3);
    for (int t = 0; t < 10; ++t) {
        auto k = random_keypoints(rng);
        const double s = rng.uniform(0.1, 10);
        KeypointSet scaled;
        for (std::size_t i = 0; i < kKeypointCount; ++i) scaled[i] = k[i] * s;
        auto a = extract_features(k), b = extract_features(scaled);
        for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(b.values[i], s * a.values[i], 1e-9 * s * a.values[i]);
        for (std::size_t i = 6; i < 10; ++i) EXPECT_NEAR(b.values[i], a.values[i], 1e-6);
    }
}

TEST(Features, DistanceExamples) {
    EXPECT_EQ(distance({1, 2, 3}, {1, 2, 3}), 0.0);
    EXPECT_EQ(distance({0, 0, 0}, {3, 4, 0}), 5.0);
    Rng rng(4);
    for (int t = 0; t < 100; ++t) {
        Point3 p{rng.normal(0, 100), rng.normal(0, 100), rng.normal(0, 100)};
        Point3 q{rng.normal(0, 100), rng.normal(0, 100), rng.normal(0, 100)};
        const double want = std::sqrt((p.x - q.x) * (p.x - q.x) + (p.y - q.y) * (p.y - q.y) + (p.z - q.z) * (p.z - q.z));
        EXPECT_NEAR(distance(p, q), want, 1e-9 * want);
    }
}

TEST(Features, StraightLineUnitSpacing) {
    KeypointSet k;
    for (std::size_t i = 0; i < kKeypointCount; ++i) k[i] = {double(i), 0, 0};
    auto f = extract_features(k);
    for (std::size_t i = 0; i < 6; ++i) EXPECT_DOUBLE_EQ(f.distance(i), 1.0);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(f.angle(i), std::numbers::pi);
}

TEST(Features, NearParallelRaysClampWithoutNaN) {
    // rounding pushes the cosine just past 1
    const double a = angle({1e8, 1, 0}, {0, 0, 0}, {1e8 + 1, 1, 0});
    EXPECT_FALSE(std::isnan(a));
    EXPECT_GE(a, 0.0);
    EXPECT_LT(a, 1e-7);
}
