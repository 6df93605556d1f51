#include "duckmorph/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <nlohmann/json.hpp>

#include "duckmorph/errors.hpp"
#include "duckmorph/rng.hpp"
#include "duckmorph/tensor/checkpoint.hpp"
#include "duckmorph/tensor/optim.hpp"

namespace duckmorph::train {

namespace {

std::vector<double> as_vector(const auto& arr) { return std::vector<double>(arr.begin(), arr.end()); }

Tensor scaled_target(const imaging::MinMaxScaler& scaler, const dataset::Labels& labels) {
    const auto v = scaler.transform(as_vector(labels));
    return Tensor::from_data({1, fusion::kTargets}, std::vector<float>(v.begin(), v.end()));
}

struct Prepared {
    fusion::FusionInput input;
    Tensor target;
};

std::vector<Prepared> prepare(const TrainedFusion& m, const std::vector<FusionSample>& set) {
    std::vector<Prepared> out;
    out.reserve(set.size());
    for (const auto& s : set) out.push_back({m.input(s), scaled_target(m.label_scaler, s.labels)});
    return out;
}

double mean_loss(const fusion::FusionModel& model, const std::vector<Prepared>& set) {
    tensor::NoGradGuard guard;
    double sum = 0;
    for (const auto& p : set) sum += tensor::mse_loss(model.forward(p.input), p.target).item();
    return sum / static_cast<double>(set.size());
}

} // namespace

nlohmann::json TrainConfig::to_json() const {
    return {{"epochs", epochs}, {"batch_size", batch_size}, {"learning_rate", learning_rate}, {"seed", seed}};
}

fusion::FusionInput TrainedFusion::input(const FusionSample& s) const {
    fusion::FusionInput in{s.top, s.side, s.depth, {}};
    const auto g = feature_scaler.transform(as_vector(s.features));
    for (std::size_t i = 0; i < g.size(); ++i) in.geometric[i] = static_cast<float>(g[i]);
    return in;
}

dataset::Labels TrainedFusion::predict(const FusionSample& s) const {
    tensor::NoGradGuard guard;
    const auto y = model.forward(input(s));
    std::vector<double> scaled(y.data().begin(), y.data().end());
    const auto orig = label_scaler.inverse_transform(scaled);
    dataset::Labels out{};
    std::copy(orig.begin(), orig.end(), out.begin());
    return out;
}

void TrainedFusion::save(const std::filesystem::path& path) const {
    nlohmann::json curve_json = nlohmann::json::array();
    for (const auto& e : curve) curve_json.push_back({e.epoch, e.train_loss, e.val_loss});
    tensor::save_checkpoint(path, model.parameters(),
                            {{"model", "fusion"},
                             {"config", model.config().to_json()},
                             {"label_scaler", label_scaler.to_json()},
                             {"feature_scaler", feature_scaler.to_json()},
                             {"best_epoch", best_epoch},
                             {"best_val_loss", best_val_loss},
                             {"curve", curve_json},
                             {"info", info}});
}

TrainedFusion TrainedFusion::load(const std::filesystem::path& path) {
    const auto ckpt = tensor::load_checkpoint(path);
    const auto& meta = ckpt.metadata;
    if (meta.value("model", "") != "fusion") throw StateError(path.string() + " is not a fusion checkpoint");
    try {
        TrainedFusion t{fusion::FusionModel(fusion::FusionConfig::from_json(meta.at("config"))),
                        imaging::MinMaxScaler::from_json(meta.at("label_scaler")),
                        imaging::MinMaxScaler::from_json(meta.at("feature_scaler")),
                        {},
                        meta.at("best_epoch").get<std::size_t>(),
                        meta.at("best_val_loss").get<double>(),
                        meta.value("info", nlohmann::json::object())};
        for (const auto& e : meta.at("curve"))
            t.curve.push_back({e[0].get<std::size_t>(), e[1].get<double>(), e[2].get<double>()});
        tensor::restore_parameters(ckpt, t.model.parameters());
        return t;
    } catch (const nlohmann::json::exception& e) {
        throw StateError(path.string() + ": malformed fusion metadata: " + e.what());
    }
}

TrainedFusion train_fusion(const std::vector<FusionSample>& train, const std::vector<FusionSample>& val,
                           const fusion::FusionConfig& model_cfg, const TrainConfig& cfg,
                           const EpochCallback& on_epoch) {
    if (train.size() < 2) throw ArgumentError("fusion training needs at least 2 training samples");
    if (cfg.epochs < 1 || cfg.batch_size < 1) throw ConfigError("epochs and batch size must be positive");
    if (!(cfg.learning_rate > 0)) throw ConfigError("learning rate must be positive");

    TrainedFusion result{fusion::FusionModel(model_cfg), {}, {}, {}, 0, 0, nlohmann::json::object()};
    std::vector<std::vector<double>> label_rows, feature_rows;
    for (const auto& s : train) {
        label_rows.push_back(as_vector(s.labels));
        feature_rows.push_back(as_vector(s.features));
    }
    result.label_scaler.fit(label_rows);
    result.feature_scaler.fit(feature_rows);
    const auto train_set = prepare(result, train);
    const auto val_set = prepare(result, val);

    auto& model = result.model;
    const auto params = model.parameters();
    tensor::OptimizerState<float> opt;
    opt.config.learning_rate = cfg.learning_rate;
    Rng rng(cfg.seed);

    std::vector<std::vector<float>> best;
    double best_score = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        rng.shuffle(order.begin(), order.end());
        double sum = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            tensor::zero_grads(params);
            const float inv = 1.0f / static_cast<float>(end - start);
            for (std::size_t b = start; b < end; ++b) {
                const auto& p = train_set[order[b]];
                auto loss = tensor::mse_loss(model.forward(p.input), p.target);
                sum += loss.item();
                tensor::scale(loss, inv).backward();
            }
            tensor::adam_step(params, opt);
        }
        EpochLog log{epoch, sum / static_cast<double>(order.size()), 0};
        log.val_loss = mean_loss(model, val_set.empty() ? train_set : val_set);
        if (!std::isfinite(log.train_loss) || !std::isfinite(log.val_loss)) {
            throw NumericError("fusion training diverged at epoch " + std::to_string(epoch) +
                               " (train loss " + std::to_string(log.train_loss) + ")");
        }
        result.curve.push_back(log);
        if (on_epoch) on_epoch(log);
        if (log.val_loss < best_score) {
            best_score = log.val_loss;
            result.best_epoch = epoch;
            best.clear();
            for (const auto& p : params) best.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
        }
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto t = params[i].tensor;
        auto dst = t.mutable_data();
        std::copy(best[i].begin(), best[i].end(), dst.begin());
    }
    result.best_val_loss = best_score;
    return result;
}

std::vector<dataset::Labels> predict_all(const TrainedFusion& m, const std::vector<FusionSample>& set) {
    std::vector<dataset::Labels> out;
    out.reserve(set.size());
    for (const auto& s : set) out.push_back(m.predict(s));
    return out;
}

metrics::MetricsReport evaluate(const TrainedFusion& m, const std::vector<FusionSample>& set,
                                metrics::OverallMode mode) {
    std::vector<dataset::Labels> truth;
    for (const auto& s : set) truth.push_back(s.labels);
    return metrics::compute_metrics(predict_all(m, set), truth, mode);
}

std::string curve_csv(const std::vector<EpochLog>& curve) {
    std::string out = "epoch,train_loss,val_loss\n";
    char line[96];
    for (const auto& e : curve) {
        std::snprintf(line, sizeof line, "%zu,%.9g,%.9g\n", e.epoch, e.train_loss, e.val_loss);
        out += line;
    }
    return out;
}

std::vector<FusionSample> nested_subset(const std::vector<FusionSample>& train, double fraction, std::uint64_t seed) {
    if (!(fraction > 0 && fraction <= 1)) throw ArgumentError("fraction must be in (0, 1]");
    std::vector<std::string> ducks;
    std::map<std::string, std::size_t> seen;
    for (const auto& s : train)
        if (seen.emplace(s.duck_id, ducks.size()).second) ducks.push_back(s.duck_id);
    std::vector<std::size_t> order(ducks.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(derive_seed(seed, 0x5eed5));
    rng.shuffle(order.begin(), order.end());
    const auto keep_n = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(ducks.size()) - 1e-9));
    std::vector<bool> keep(ducks.size(), false);
    for (std::size_t i = 0; i < std::max<std::size_t>(keep_n, 1); ++i) keep[order[i]] = true;
    std::vector<FusionSample> out;
    for (const auto& s : train)
        if (keep[seen.at(s.duck_id)]) out.push_back(s);
    return out;
}

std::vector<SweepRow> dataset_size_sweep(const std::vector<FusionSample>& train, const std::vector<FusionSample>& val,
                                         const std::vector<FusionSample>& test, const std::vector<double>& fractions,
                                         const fusion::FusionConfig& model_cfg, const TrainConfig& cfg,
                                         metrics::OverallMode mode) {
    if (fractions.empty()) throw ArgumentError("sweep needs at least one fraction");
    for (double f : fractions)
        if (!(f > 0 && f <= 1)) throw ArgumentError("sweep fraction " + std::to_string(f) + " is outside (0, 1]");
    std::vector<SweepRow> rows;
    for (double f : fractions) {
        const auto subset = nested_subset(train, f, cfg.seed);
        const auto model = train_fusion(subset, val, model_cfg, cfg);
        rows.push_back({f, subset.size(), evaluate(model, test, mode)});
    }
    return rows;
}

} // namespace duckmorph::train
