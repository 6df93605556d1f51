#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "duckmorph/dataset.hpp"
#include "duckmorph/fusion.hpp"
#include "duckmorph/imaging.hpp"
#include "duckmorph/metrics.hpp"

namespace duckmorph::train {

using fusion::Tensor;

// One sample in model-ready form: images already masked and resized,
// features and labels in original units.
struct FusionSample {
    std::string sample_id, duck_id;
    Tensor top, side, depth;
    std::array<double, geomfeat::kFeatureCount> features{};
    dataset::Labels labels{};
};

struct TrainConfig {
    std::size_t epochs = 20;
    std::size_t batch_size = 8;
    double learning_rate = 1e-3;
    std::uint64_t seed = 1; // shuffling order

    nlohmann::json to_json() const;
};

struct EpochLog {
    std::size_t epoch = 0;
    double train_loss = 0;
    double val_loss = 0;
};

// A fusion model with the scalers it was trained with.
struct TrainedFusion {
    fusion::FusionModel model;
    imaging::MinMaxScaler label_scaler, feature_scaler;
    std::vector<EpochLog> curve;
    std::size_t best_epoch = 0;
    double best_val_loss = 0;
    nlohmann::json info = nlohmann::json::object(); // caller context saved with the checkpoint

    fusion::FusionInput input(const FusionSample& s) const;
    dataset::Labels predict(const FusionSample& s) const; // original units

    void save(const std::filesystem::path& path) const;
    static TrainedFusion load(const std::filesystem::path& path);
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Fits both scalers on `train`, minimizes scaled-label MSE with Adam and
// returns the parameters of the epoch with the lowest validation loss
// (training loss when `val` is empty).
TrainedFusion train_fusion(const std::vector<FusionSample>& train, const std::vector<FusionSample>& val,
                           const fusion::FusionConfig& model_cfg, const TrainConfig& cfg,
                           const EpochCallback& on_epoch = {});

std::vector<dataset::Labels> predict_all(const TrainedFusion& m, const std::vector<FusionSample>& set);

metrics::MetricsReport evaluate(const TrainedFusion& m, const std::vector<FusionSample>& set,
                                metrics::OverallMode mode = metrics::OverallMode::Pooled);

// epoch,train_loss,val_loss rows.
std::string curve_csv(const std::vector<EpochLog>& curve);

// Duck-level nested subset of `train`: the same seeded permutation of ducks
// is truncated to ceil(fraction * ducks), so smaller fractions are subsets
// of larger ones and 1.0 returns `train` unchanged.
std::vector<FusionSample> nested_subset(const std::vector<FusionSample>& train, double fraction, std::uint64_t seed);

struct SweepRow {
    double fraction = 0;
    std::size_t train_samples = 0;
    metrics::MetricsReport report; // on the test set
};

std::vector<SweepRow> dataset_size_sweep(const std::vector<FusionSample>& train, const std::vector<FusionSample>& val,
                                         const std::vector<FusionSample>& test, const std::vector<double>& fractions,
                                         const fusion::FusionConfig& model_cfg, const TrainConfig& cfg,
                                         metrics::OverallMode mode = metrics::OverallMode::Pooled);

} // namespace duckmorph::train
