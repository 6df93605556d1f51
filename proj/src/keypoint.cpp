#include "duckmorph/keypoint.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "duckmorph/errors.hpp"
#include "duckmorph/pointcloud.hpp"
#include "duckmorph/tensor/checkpoint.hpp"

namespace duckmorph::keypoint {

std::vector<std::vector<std::size_t>> ball_query(std::span<const Point3> cloud,
                                                 std::span<const std::size_t> centroids, double radius,
                                                 std::size_t max_k) {
    if (!(radius > 0)) throw ArgumentError("ball query radius must be positive");
    if (max_k < 1) throw ArgumentError("ball query group size must be at least 1");
    const pointcloud::NeighborIndex index(cloud);
    std::vector<std::vector<std::size_t>> groups;
    groups.reserve(centroids.size());
    for (auto c : centroids) {
        if (c >= cloud.size()) throw ArgumentError("ball query centroid index out of range");
        auto g = index.radius_search(cloud[c], radius);
        if (g.empty()) g.push_back(c);
        if (g.size() > max_k) g.resize(max_k);
        groups.push_back(std::move(g));
    }
    return groups;
}

KeypointConfig KeypointConfig::defaults() {
    KeypointConfig c;
    c.sa = {{512, 0.1, 32, {32, 32, 64}}, {128, 0.2, 32, {64, 64, 128}}, {0, 0, 0, {128, 256, 512}}};
    c.head_widths = {256, 128};
    return c;
}

nlohmann::json KeypointConfig::to_json() const {
    nlohmann::json stages = nlohmann::json::array();
    for (const auto& s : sa) {
        stages.push_back({{"num_centroids", s.num_centroids},
                          {"radius", s.radius},
                          {"max_group_size", s.max_group_size},
                          {"mlp_widths", s.mlp_widths}});
    }
    return {{"sa", stages}, {"head_widths", head_widths}, {"input_points", input_points}, {"seed", seed}};
}

KeypointConfig KeypointConfig::from_json(const nlohmann::json& j) {
    KeypointConfig c;
    try {
        for (const auto& s : j.at("sa")) {
            c.sa.push_back({s.at("num_centroids").get<std::size_t>(), s.at("radius").get<double>(),
                            s.at("max_group_size").get<std::size_t>(),
                            s.at("mlp_widths").get<std::vector<std::size_t>>()});
        }
        c.head_widths = j.at("head_widths").get<std::vector<std::size_t>>();
        c.input_points = j.value("input_points", kInputPoints);
        c.seed = j.value("seed", std::uint64_t{1});
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("keypoint config: ") + e.what());
    }
    c.validate();
    return c;
}

void KeypointConfig::validate() const {
    if (sa.empty()) throw ConfigError("keypoint config needs at least one set abstraction stage");
    std::size_t available = input_points;
    for (std::size_t i = 0; i < sa.size(); ++i) {
        const auto& s = sa[i];
        const std::string where = "set abstraction stage " + std::to_string(i + 1);
        if (s.mlp_widths.empty()) throw ConfigError(where + " has no MLP widths");
        if (std::find(s.mlp_widths.begin(), s.mlp_widths.end(), 0u) != s.mlp_widths.end())
            throw ConfigError(where + " has a zero MLP width");
        const bool group_all = s.num_centroids == 0;
        if (group_all && i + 1 != sa.size()) throw ConfigError(where + ": only the last stage may group all points");
        if (!group_all) {
            if (s.num_centroids > available)
                throw ConfigError(where + " asks for " + std::to_string(s.num_centroids) + " centroids from " +
                                  std::to_string(available) + " points");
            if (!(s.radius > 0) || s.max_group_size < 1) throw ConfigError(where + " needs radius > 0 and group size >= 1");
            available = s.num_centroids;
        }
    }
    if (std::find(head_widths.begin(), head_widths.end(), 0u) != head_widths.end())
        throw ConfigError("keypoint head has a zero width");
}

namespace {

StageGrouping make_grouping(std::span<const Point3> pts, const SAConfig& s, std::vector<std::size_t> centroids) {
    StageGrouping g;
    if (s.num_centroids == 0) {
        g.group_size = pts.size();
        g.members.resize(pts.size());
        for (std::size_t i = 0; i < pts.size(); ++i) g.members[i] = i;
        return g;
    }
    g.centroids = std::move(centroids);
    g.group_size = s.max_group_size;
    const auto groups = ball_query(pts, g.centroids, s.radius, s.max_group_size);
    g.members.reserve(g.centroids.size() * g.group_size);
    for (const auto& grp : groups) {
        g.members.insert(g.members.end(), grp.begin(), grp.end());
        for (std::size_t k = grp.size(); k < g.group_size; ++k) g.members.push_back(grp.front());
    }
    return g;
}

std::vector<Point3> pick(std::span<const Point3> pts, const std::vector<std::size_t>& idx) {
    std::vector<Point3> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(pts[i]);
    return out;
}

PreparedCloud prepare_impl(const PointCloud& cloud, const KeypointConfig& cfg,
                           const std::vector<std::size_t>* pinned) {
    if (cloud.size() != cfg.input_points) {
        throw ArgumentError("keypoint network expects " + std::to_string(cfg.input_points) + " points, got " +
                            std::to_string(cloud.size()));
    }
    PreparedCloud p;
    double sx = 0, sy = 0, sz = 0;
    for (const auto& q : cloud.points) {
        sx += q.x;
        sy += q.y;
        sz += q.z;
    }
    const double n = static_cast<double>(cloud.size());
    p.center = {sx / n, sy / n, sz / n};
    double r2 = 0;
    for (const auto& q : cloud.points) r2 = std::max(r2, squared_distance(q, p.center));
    p.scale = std::sqrt(r2);
    if (!(p.scale > 0)) throw DegenerateGeometryError("cloud has zero extent");
    p.points.reserve(cloud.size());
    for (const auto& q : cloud.points) p.points.push_back((q - p.center) * (1.0 / p.scale));

    std::vector<Point3> level = p.points;
    for (std::size_t i = 0; i < cfg.sa.size(); ++i) {
        const auto& s = cfg.sa[i];
        std::vector<std::size_t> cents;
        if (s.num_centroids != 0) {
            if (i == 0 && pinned) {
                cents = *pinned;
                if (cents.size() != s.num_centroids)
                    throw ArgumentError("pinned centroid count does not match the first stage");
            } else {
                cents = pointcloud::farthest_point_sample(std::span<const Point3>(level), s.num_centroids, 0);
            }
        }
        p.stages.push_back(make_grouping(level, s, cents));
        if (s.num_centroids != 0) level = pick(level, p.stages.back().centroids);
    }
    return p;
}

} // namespace

PreparedCloud prepare_cloud(const PointCloud& cloud, const KeypointConfig& cfg) {
    return prepare_impl(cloud, cfg, nullptr);
}

PreparedCloud prepare_cloud_with_centroids(const PointCloud& cloud, const KeypointConfig& cfg,
                                           std::vector<std::size_t> first_centroids) {
    return prepare_impl(cloud, cfg, &first_centroids);
}

std::vector<float> normalize_keypoints(const geomfeat::KeypointSet& k, const PreparedCloud& p) {
    std::vector<float> out;
    out.reserve(kOutputWidth);
    for (const auto& q : k.points) {
        const Point3 r = (q - p.center) * (1.0 / p.scale);
        out.insert(out.end(), {static_cast<float>(r.x), static_cast<float>(r.y), static_cast<float>(r.z)});
    }
    return out;
}

geomfeat::KeypointSet denormalize_keypoints(std::span<const float> y, const PreparedCloud& p) {
    if (y.size() != kOutputWidth) throw DimensionError("keypoint output must have 21 values");
    geomfeat::KeypointSet k;
    for (std::size_t i = 0; i < geomfeat::kKeypointCount; ++i) {
        const Point3 r{y[3 * i], y[3 * i + 1], y[3 * i + 2]};
        k[i] = r * p.scale + p.center;
    }
    return k;
}

SetAbstraction::SetAbstraction(const SAConfig& cfg, std::size_t in_features, Rng& rng) : cfg_(cfg) {
    std::size_t width = 3 + in_features;
    for (auto w : cfg.mlp_widths) {
        mlp_.emplace_back(width, w, rng);
        width = w;
    }
}

StageOutput SetAbstraction::operator()(std::span<const Point3> points, const Tensor& features,
                                       const StageGrouping& g) const {
    const bool group_all = g.centroids.empty();
    const std::size_t groups = group_all ? 1 : g.centroids.size();
    const std::size_t rows = groups * g.group_size;
    if (g.members.size() != rows) throw DimensionError("stage grouping is inconsistent");

    std::vector<float> rel(rows * 3);
    for (std::size_t gi = 0; gi < groups; ++gi) {
        const Point3 c = group_all ? Point3{} : points[g.centroids[gi]];
        for (std::size_t k = 0; k < g.group_size; ++k) {
            const std::size_t r = gi * g.group_size + k;
            const Point3 d = points[g.members[r]] - c;
            rel[3 * r] = static_cast<float>(d.x);
            rel[3 * r + 1] = static_cast<float>(d.y);
            rel[3 * r + 2] = static_cast<float>(d.z);
        }
    }
    Tensor h = Tensor::from_data({rows, 3}, std::move(rel));
    if (features.defined()) {
        h = tensor::concat_cols<float>({h, tensor::gather_rows(features, std::span<const std::size_t>(g.members))});
    }
    for (const auto& layer : mlp_) h = tensor::relu(layer(h));

    StageOutput out;
    out.features = tensor::max_pool_groups(h, groups, g.group_size);
    if (group_all) {
        out.points = {Point3{}};
    } else {
        out.points = pick(points, g.centroids);
    }
    return out;
}

void SetAbstraction::collect(const std::string& prefix, tensor::ParameterList<float>& out) const {
    for (std::size_t i = 0; i < mlp_.size(); ++i) mlp_[i].collect(prefix + ".mlp" + std::to_string(i), out);
}

KeypointModel::KeypointModel(KeypointConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    Rng rng(cfg_.seed);
    std::size_t features = 0;
    for (const auto& s : cfg_.sa) {
        stages_.emplace_back(s, features, rng);
        features = s.mlp_widths.back();
    }
    for (auto w : cfg_.head_widths) {
        head_.emplace_back(features, w, rng);
        features = w;
    }
    head_.emplace_back(features, kOutputWidth, rng);
}

Tensor KeypointModel::forward(const PreparedCloud& cloud) const {
    if (cloud.stages.size() != stages_.size()) throw ArgumentError("cloud was prepared for a different model");
    std::vector<Point3> pts = cloud.points;
    Tensor feats;
    for (std::size_t i = 0; i < stages_.size(); ++i) {
        auto out = stages_[i](pts, feats, cloud.stages[i]);
        pts = std::move(out.points);
        feats = out.features;
    }
    // feats is [1 x width] after the group-all stage
    if (feats.dim(0) != 1) feats = tensor::max_pool_groups(feats, 1, feats.dim(0));
    for (std::size_t i = 0; i + 1 < head_.size(); ++i) feats = tensor::relu(head_[i](feats));
    return head_.back()(feats);
}

tensor::ParameterList<float> KeypointModel::parameters() const {
    tensor::ParameterList<float> out;
    for (std::size_t i = 0; i < stages_.size(); ++i) stages_[i].collect("sa" + std::to_string(i + 1), out);
    for (std::size_t i = 0; i < head_.size(); ++i) head_[i].collect("head" + std::to_string(i + 1), out);
    return out;
}

void KeypointModel::save(const std::filesystem::path& path) const {
    tensor::save_checkpoint(path, parameters(), {{"model", "keypoint"}, {"config", cfg_.to_json()}});
}

KeypointModel KeypointModel::load(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw StateError("keypoint checkpoint " + path.string() + " does not exist");
    const auto ckpt = tensor::load_checkpoint(path);
    if (ckpt.metadata.value("model", "") != "keypoint")
        throw StateError(path.string() + " is not a keypoint checkpoint");
    KeypointModel m(KeypointConfig::from_json(ckpt.metadata.at("config")));
    tensor::restore_parameters(ckpt, m.parameters());
    m.mark_trained();
    return m;
}

geomfeat::KeypointSet predict_keypoints(const KeypointModel& model, const PointCloud& cloud) {
    if (!model.trained()) throw StateError("keypoint model has not been trained or loaded");
    const auto prepared = prepare_cloud(cloud, model.config());
    tensor::NoGradGuard guard;
    const auto y = model.forward(prepared);
    return denormalize_keypoints(y.data(), prepared);
}

namespace {

struct PreparedExample {
    PreparedCloud cloud;
    Tensor target;
};

std::vector<PreparedExample> prepare_all(const std::vector<KeypointExample>& set, const KeypointConfig& cfg) {
    std::vector<PreparedExample> out;
    out.reserve(set.size());
    for (const auto& ex : set) {
        PreparedExample p{prepare_cloud(ex.cloud, cfg), Tensor()};
        p.target = Tensor::from_data({1, kOutputWidth}, normalize_keypoints(ex.target, p.cloud));
        out.push_back(std::move(p));
    }
    return out;
}

double mean_mse(const KeypointModel& model, const std::vector<PreparedExample>& set) {
    tensor::NoGradGuard guard;
    double sum = 0;
    for (const auto& ex : set) sum += tensor::mse_loss(model.forward(ex.cloud), ex.target).item();
    return set.empty() ? 0.0 : sum / static_cast<double>(set.size());
}

} // namespace

KeypointTrainResult train_keypoints(const std::vector<KeypointExample>& train,
                                    const std::vector<KeypointExample>& val, const KeypointConfig& model_cfg,
                                    const KeypointTrainConfig& cfg, const EpochCallback& on_epoch) {
    if (train.empty()) throw ArgumentError("keypoint training set is empty");
    if (cfg.epochs < 1 || cfg.batch_size < 1) throw ConfigError("epochs and batch size must be positive");
    const auto train_set = prepare_all(train, model_cfg);
    const auto val_set = prepare_all(val, model_cfg);

    KeypointTrainResult result{KeypointModel(model_cfg), {}, 0, 0};
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
                const auto& ex = train_set[order[b]];
                auto loss = tensor::mse_loss(model.forward(ex.cloud), ex.target);
                sum += loss.item();
                tensor::scale(loss, inv).backward();
            }
            tensor::adam_step(params, opt);
        }
        EpochLog log{epoch, sum / static_cast<double>(order.size()), 0};
        log.val_mse = val_set.empty() ? mean_mse(model, train_set) : mean_mse(model, val_set);
        if (!std::isfinite(log.train_mse) || !std::isfinite(log.val_mse))
            throw NumericError("keypoint training diverged at epoch " + std::to_string(epoch));
        result.curve.push_back(log);
        if (on_epoch) on_epoch(log);
        if (log.val_mse < best_score) {
            best_score = log.val_mse;
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
    result.best_val_mse = best_score;
    model.mark_trained();
    return result;
}

double evaluate_keypoints(const KeypointModel& model, const std::vector<KeypointExample>& set) {
    return mean_mse(model, prepare_all(set, model.config()));
}

} // namespace duckmorph::keypoint
