#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include <nlohmann/json.hpp>

#include "duckmorph/errors.hpp"
#include "duckmorph/keypoint.hpp"
#include "duckmorph/pointcloud.hpp"
#include "support/oracles.hpp"

using namespace duckmorph;
using namespace duckmorph::keypoint;

namespace {

KeypointConfig tiny(std::size_t points = 256, std::size_t group = 16) {
    KeypointConfig c;
    c.input_points = points;
    c.sa = {{64, 0.35, group, {16, 16}}, {16, 0.7, group, {32}}, {0, 0, 0, {32}}};
    c.head_widths = {32};
    c.seed = 3;
    return c;
}

PointCloud blob(Rng& rng, std::size_t n) {
    PointCloud c;
    for (std::size_t i = 0; i < n; ++i)
        c.points.push_back({rng.normal(0, 80), rng.normal(0, 40), rng.normal(100, 30)});
    return c;
}

geomfeat::KeypointSet some_keypoints(const PointCloud& c) {
    geomfeat::KeypointSet k;
    for (std::size_t i = 0; i < geomfeat::kKeypointCount; ++i) k[i] = c.points[i * 13];
    return k;
}

} // namespace

TEST(BallQuery, MatchesBruteForce) {
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        auto pts = duckmorph::testing::random_cloud(rng, 50 + rng.below(300));
        std::vector<std::size_t> cents{0, pts.size() / 2, pts.size() - 1};
        const double r = 0.05 + rng.uniform(0, 0.4);
        const std::size_t k = 1 + rng.below(40);
        auto groups = ball_query(pts, cents, r, k);
        ASSERT_EQ(groups.size(), cents.size());
        for (std::size_t g = 0; g < cents.size(); ++g) {
            std::vector<std::size_t> want;
            for (std::size_t i = 0; i < pts.size() && want.size() < k; ++i)
                if (duckmorph::testing::oracle_d2(pts[i], pts[cents[g]]) <= r * r) want.push_back(i);
            EXPECT_EQ(groups[g], want);
        }
    }
}

TEST(BallQuery, RejectsBadArguments) {
    std::vector<Point3> pts{{0, 0, 0}, {1, 0, 0}};
    std::vector<std::size_t> c{0};
    EXPECT_THROW(ball_query(pts, c, 0.0, 4), ArgumentError);
    EXPECT_THROW(ball_query(pts, c, 1.0, 0), ArgumentError);
    std::vector<std::size_t> bad{2};
    EXPECT_THROW(ball_query(pts, bad, 1.0, 4), ArgumentError);
}

TEST(KeypointConfig, ValidatesStages) {
    EXPECT_NO_THROW(KeypointConfig::defaults().validate());
    auto c = tiny();
    std::swap(c.sa[1], c.sa[2]);
    EXPECT_THROW(c.validate(), ConfigError);
    c = tiny();
    c.sa[1].num_centroids = 100; // more than stage one keeps
    EXPECT_THROW(c.validate(), ConfigError);
    c = tiny();
    c.sa[0].mlp_widths = {};
    EXPECT_THROW(c.validate(), ConfigError);
    EXPECT_EQ(KeypointConfig::from_json(tiny().to_json()).to_json(), tiny().to_json());
}

TEST(KeypointModel, DefaultShapes) {
    Rng rng(5);
    const auto cloud = blob(rng, kInputPoints);
    const auto cfg = KeypointConfig::defaults();
    const auto p = prepare_cloud(cloud, cfg);
    ASSERT_EQ(p.stages.size(), 3u);
    EXPECT_EQ(p.stages[0].centroids.size(), 512u);
    EXPECT_EQ(p.stages[0].members.size(), 512u * 32u);
    EXPECT_EQ(p.stages[1].centroids.size(), 128u);
    EXPECT_EQ(p.stages[2].members.size(), 128u);
    KeypointModel m(cfg);
    tensor::NoGradGuard g;
    const auto y = m.forward(p);
    EXPECT_EQ(y.dim(0), 1u);
    EXPECT_EQ(y.dim(1), kOutputWidth);
}

TEST(KeypointModel, PrepareNormalizesAndChecksCount) {
    Rng rng(6);
    const auto cloud = blob(rng, 256);
    const auto p = prepare_cloud(cloud, tiny());
    Point3 mean{};
    double rmax = 0;
    for (const auto& q : p.points) {
        mean = mean + q * (1.0 / 256);
        rmax = std::max(rmax, q.norm());
    }
    EXPECT_NEAR(mean.norm(), 0, 1e-12);
    EXPECT_NEAR(rmax, 1, 1e-12);
    EXPECT_THROW(prepare_cloud(blob(rng, 255), tiny()), ArgumentError);

    const auto k = some_keypoints(cloud);
    const auto back = denormalize_keypoints(normalize_keypoints(k, p), p);
    for (std::size_t i = 0; i < geomfeat::kKeypointCount; ++i) EXPECT_LT(geomfeat::distance(back[i], k[i]), 1e-3);
}

TEST(KeypointModel, PermutationInvariantWithPinnedCentroids) {
    // Groups hold every point in the ball, so membership does not depend on order.
    const auto cfg = tiny(256, 256);
    Rng rng(7);
    const auto cloud = blob(rng, 256);
    std::vector<std::size_t> perm(256);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm.begin(), perm.end());
    PointCloud shuffled;
    std::vector<std::size_t> where(256);
    for (std::size_t i = 0; i < 256; ++i) {
        shuffled.points.push_back(cloud.points[perm[i]]);
        where[perm[i]] = i;
    }
    const auto base = prepare_cloud(cloud, cfg);
    std::vector<std::size_t> pinned;
    for (auto c : base.stages[0].centroids) pinned.push_back(where[c]);
    const auto moved = prepare_cloud_with_centroids(shuffled, cfg, pinned);

    KeypointModel m(cfg);
    tensor::NoGradGuard g;
    const auto ya = m.forward(base), yb = m.forward(moved);
    const auto a = ya.data(), b = yb.data();
    for (std::size_t i = 0; i < kOutputWidth; ++i) EXPECT_NEAR(a[i], b[i], 1e-5);
    EXPECT_THROW(prepare_cloud_with_centroids(shuffled, cfg, {0, 1}), ArgumentError);
}

TEST(KeypointModel, TranslationMovesPredictionsRigidly) {
    const auto cfg = tiny();
    Rng rng(8);
    const auto cloud = blob(rng, 256);
    const Point3 t{250, -400, 75};
    PointCloud moved = cloud;
    for (auto& q : moved.points) q = q + t;
    KeypointModel m(cfg);
    m.mark_trained();
    const auto a = predict_keypoints(m, cloud);
    const auto b = predict_keypoints(m, moved);
    for (std::size_t i = 0; i < geomfeat::kKeypointCount; ++i)
        EXPECT_LT(geomfeat::distance(a[i] + t, b[i]), 1e-3);
}

TEST(KeypointModel, UntrainedPredictionIsAnError) {
    Rng rng(9);
    KeypointModel m(tiny());
    EXPECT_THROW(predict_keypoints(m, blob(rng, 256)), StateError);
}

TEST(KeypointTraining, OverfitsOneCloudAndRoundTrips) {
    Rng rng(10);
    const auto cloud = blob(rng, 256);
    std::vector<KeypointExample> set{{"one", cloud, some_keypoints(cloud)}};
    KeypointTrainConfig tc;
    tc.epochs = 300;
    tc.batch_size = 1;
    tc.learning_rate = 3e-3;
    auto res = train_keypoints(set, {}, tiny(), tc);
    EXPECT_LT(res.best_val_mse, 1e-4);
    EXPECT_EQ(res.curve.size(), 300u);
    EXPECT_EQ(res.best_val_mse, std::min_element(res.curve.begin(), res.curve.end(), [](auto& x, auto& y) {
                                    return x.val_mse < y.val_mse;
                                })->val_mse);
    EXPECT_NEAR(evaluate_keypoints(res.model, set), res.best_val_mse, 1e-9);

    const auto path = std::filesystem::temp_directory_path() / "duckmorph_keypoint_test.ckpt";
    res.model.save(path);
    const auto loaded = KeypointModel::load(path);
    const auto a = predict_keypoints(res.model, cloud);
    const auto b = predict_keypoints(loaded, cloud);
    for (std::size_t i = 0; i < geomfeat::kKeypointCount; ++i) EXPECT_EQ(a[i].x, b[i].x);
    std::filesystem::remove(path);
    EXPECT_THROW(KeypointModel::load(path), StateError);
}
