#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "duckmorph/geometry.hpp"
#include "duckmorph/geomfeat.hpp"
#include "duckmorph/tensor/layers.hpp"
#include "duckmorph/tensor/optim.hpp"

namespace duckmorph::keypoint {

using tensor::Tensor;

inline constexpr std::size_t kInputPoints = 8192;
inline constexpr std::size_t kOutputWidth = geomfeat::kKeypointCount * 3;

// Up to `max_k` cloud points within `radius` of each centroid, lowest index
// first. A centroid with an empty ball gets a group holding only itself.
std::vector<std::vector<std::size_t>> ball_query(std::span<const Point3> cloud,
                                                 std::span<const std::size_t> centroids, double radius,
                                                 std::size_t max_k);

struct SAConfig {
    std::size_t num_centroids = 0; // 0 = group all points around the origin
    double radius = 0;             // in the normalized cloud frame
    std::size_t max_group_size = 0;
    std::vector<std::size_t> mlp_widths;
};

struct KeypointConfig {
    std::vector<SAConfig> sa;
    std::vector<std::size_t> head_widths; // hidden widths; a final 21-wide layer follows
    std::size_t input_points = kInputPoints;
    std::uint64_t seed = 1;

    static KeypointConfig defaults();
    nlohmann::json to_json() const;
    static KeypointConfig from_json(const nlohmann::json& j);
    void validate() const;
};

// Grouping of one SA stage: centroid rows and fixed-size groups (short
// groups are padded by repeating their first member).
struct StageGrouping {
    std::vector<std::size_t> centroids;
    std::vector<std::size_t> members; // centroids.size() * group_size entries
    std::size_t group_size = 0;
};

// A cloud in the network's frame: centred on its mean and divided by the
// largest radius, plus the groupings every SA stage will use.
struct PreparedCloud {
    Point3 center;
    double scale = 1;
    std::vector<Point3> points;
    std::vector<StageGrouping> stages;
};

PreparedCloud prepare_cloud(const PointCloud& cloud, const KeypointConfig& cfg);

// Builds the stage groupings from explicit first-stage centroids; used to
// pin centroids when comparing permuted inputs.
PreparedCloud prepare_cloud_with_centroids(const PointCloud& cloud, const KeypointConfig& cfg,
                                           std::vector<std::size_t> first_centroids);

std::vector<float> normalize_keypoints(const geomfeat::KeypointSet& k, const PreparedCloud& p);
geomfeat::KeypointSet denormalize_keypoints(std::span<const float> y, const PreparedCloud& p);

// Output of one SA stage: centroid coordinates and pooled features.
struct StageOutput {
    std::vector<Point3> points;
    Tensor features; // [centroids x width]
};

class SetAbstraction {
public:
    SetAbstraction() = default;
    SetAbstraction(const SAConfig& cfg, std::size_t in_features, Rng& rng);

    // `features` may be undefined for the first stage.
    StageOutput operator()(std::span<const Point3> points, const Tensor& features,
                           const StageGrouping& grouping) const;

    const SAConfig& config() const { return cfg_; }
    void collect(const std::string& prefix, tensor::ParameterList<float>& out) const;

private:
    SAConfig cfg_;
    std::vector<tensor::Linear<float>> mlp_;
};

class KeypointModel {
public:
    explicit KeypointModel(KeypointConfig cfg = KeypointConfig::defaults());

    // [1 x 21] in the normalized frame.
    Tensor forward(const PreparedCloud& cloud) const;

    const KeypointConfig& config() const { return cfg_; }
    tensor::ParameterList<float> parameters() const;
    bool trained() const { return trained_; }
    void mark_trained() { trained_ = true; }

    void save(const std::filesystem::path& path) const;
    static KeypointModel load(const std::filesystem::path& path);

private:
    KeypointConfig cfg_;
    std::vector<SetAbstraction> stages_;
    std::vector<tensor::Linear<float>> head_;
    bool trained_ = false;
};

// Validates the point count then runs the model; millimetre output.
geomfeat::KeypointSet predict_keypoints(const KeypointModel& model, const PointCloud& cloud);

struct KeypointExample {
    std::string id;
    PointCloud cloud;
    geomfeat::KeypointSet target; // millimetres
};

struct KeypointTrainConfig {
    std::size_t epochs = 40;
    std::size_t batch_size = 4;
    double learning_rate = 1e-3;
    std::uint64_t seed = 1;
};

struct EpochLog {
    std::size_t epoch = 0;
    double train_mse = 0;
    double val_mse = 0;
};

struct KeypointTrainResult {
    KeypointModel model;
    std::vector<EpochLog> curve;
    std::size_t best_epoch = 0;
    double best_val_mse = 0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Minimizes the normalized-frame MSE; returns the parameters of the epoch
// with the lowest validation MSE (training MSE when `val` is empty).
KeypointTrainResult train_keypoints(const std::vector<KeypointExample>& train,
                                    const std::vector<KeypointExample>& val, const KeypointConfig& model_cfg,
                                    const KeypointTrainConfig& cfg, const EpochCallback& on_epoch = {});

// Mean normalized-frame MSE of the model over a set.
double evaluate_keypoints(const KeypointModel& model, const std::vector<KeypointExample>& set);

} // namespace duckmorph::keypoint
