// duckmorph command line.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error. Every failure
// writes one JSON line {"error": <kind>, "message": ...} to stderr first,
// followed by human-readable detail.

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "duckmorph/codecs.hpp"
#include "duckmorph/dataset.hpp"
#include "duckmorph/errors.hpp"
#include "duckmorph/keypoint.hpp"
#include "duckmorph/metrics.hpp"
#include "duckmorph/pipeline.hpp"
#include "duckmorph/server.hpp"
#include "duckmorph/synth.hpp"
#include "duckmorph/train.hpp"

namespace fs = std::filesystem;
using namespace duckmorph;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void fail_line(const std::string& kind, const std::string& message) {
    std::cerr << nlohmann::json{{"error", kind}, {"message", message}}.dump() << "\n";
}

struct Globals {
    std::string data;
};

fs::path data_root(const Globals& g, bool must_exist = true) {
    if (g.data.empty()) throw UsageError("no data directory: pass --data or set DUCKMORPH_DATA");
    if (must_exist && !fs::is_directory(g.data)) throw UsageError("data directory " + g.data + " does not exist");
    return g.data;
}

std::vector<std::size_t> all_indices(const dataset::Manifest& m) {
    std::vector<std::size_t> v(m.samples.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = i;
    return v;
}

std::vector<std::size_t> select_samples(const dataset::Manifest& m, const std::vector<std::string>& ids) {
    if (ids.empty()) return all_indices(m);
    std::vector<std::size_t> out;
    for (const auto& id : ids) {
        bool found = false;
        for (std::size_t i = 0; i < m.samples.size(); ++i)
            if (m.samples[i].sample_id == id) {
                out.push_back(i);
                found = true;
            }
        if (!found) throw ValidationError("unknown sample id " + id);
    }
    return out;
}

void write_or_print(const std::string& out, const std::string& text) {
    if (out.empty()) {
        std::cout << text;
    } else {
        if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
        codecs::write_file_atomic(out, text);
    }
}

metrics::OverallMode overall_mode(const std::string& s) {
    if (s == "pooled") return metrics::OverallMode::Pooled;
    return metrics::OverallMode::PerTargetMean;
}

// ---- synth ----------------------------------------------------------------

struct SynthArgs {
    std::size_t count = 10, poses = 2, first_duck = 0, image_size = 256;
    std::uint64_t seed = 1;
    long long annotate = -1;
};

void run_synth(const Globals& g, const SynthArgs& a) {
    const auto root = data_root(g, false);
    synth::DatasetSpec spec;
    spec.ducks = a.count;
    spec.poses = a.poses;
    spec.seed = a.seed;
    spec.first_duck = a.first_duck;
    spec.annotate = a.annotate < 0 ? SIZE_MAX : static_cast<std::size_t>(a.annotate);
    spec.render.image_size = a.image_size;
    const auto m = synth::write_dataset(root, spec);
    std::cout << "wrote " << a.count * a.poses << " samples of " << a.count << " ducks; manifest has "
              << m.samples.size() << " samples in " << root.string() << "\n";
}

// ---- preprocess -----------------------------------------------------------

struct PreprocessArgs {
    std::vector<std::string> samples;
    pipeline::PreprocessOptions opts;
};

void run_preprocess(const Globals& g, const PreprocessArgs& a) {
    const auto root = data_root(g);
    const auto m = dataset::load_manifest(root);
    std::printf("%-24s %9s %9s %9s %8s\n", "sample", "raw", "inliers", "cluster", "clusters");
    for (auto i : select_samples(m, a.samples)) {
        const auto r = pipeline::preprocess_sample(root, m, m.samples[i], a.opts);
        std::printf("%-24s %9zu %9zu %9zu %8zu\n", r.sample_id.c_str(), r.raw_points, r.inliers, r.cluster_points,
                    r.retained_clusters);
        std::fflush(stdout);
    }
}

// ---- keypoints ------------------------------------------------------------

struct KeypointTrainArgs {
    std::string out, curve;
    keypoint::KeypointTrainConfig train;
    std::uint64_t split_seed = 1;
};

void run_keypoints_train(const Globals& g, const KeypointTrainArgs& a) {
    const auto root = data_root(g);
    const auto m = dataset::load_manifest(root);
    std::vector<std::size_t> annotated;
    std::vector<std::string> groups;
    for (std::size_t i = 0; i < m.samples.size(); ++i) {
        if (!m.samples[i].annotated) continue;
        annotated.push_back(i);
        groups.push_back(m.samples[i].duck_id);
    }
    const auto split = metrics::split_dataset(groups, {0.8, 0.1, 0.1, a.split_seed, true});
    auto take = [&](const std::vector<std::size_t>& idx) {
        std::vector<std::size_t> out;
        for (auto i : idx) out.push_back(annotated[i]);
        return pipeline::load_keypoint_examples(root, m, out);
    };
    const auto tr = take(split.train), va = take(split.val), te = take(split.test);
    std::cout << "keypoint training on " << tr.size() << " clouds, " << va.size() << " validation, " << te.size()
              << " test\n";
    auto res = keypoint::train_keypoints(tr, va, keypoint::KeypointConfig::defaults(), a.train,
                                         [](const keypoint::EpochLog& e) {
                                             std::printf("epoch %3zu  train %.6f  val %.6f\n", e.epoch, e.train_mse,
                                                         e.val_mse);
                                             std::fflush(stdout);
                                         });
    const fs::path out = a.out.empty() ? root / "models" / "keypoint.ckpt" : fs::path(a.out);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    res.model.save(out);
    std::string csv = "epoch,train_mse,val_mse\n";
    for (const auto& e : res.curve) {
        char line[96];
        std::snprintf(line, sizeof line, "%zu,%.9g,%.9g\n", e.epoch, e.train_mse, e.val_mse);
        csv += line;
    }
    write_or_print(a.curve.empty() ? out.string() + ".curve.csv" : a.curve, csv);
    std::printf("best epoch %zu, val %.6f, test normalized MSE %.6f\nsaved %s\n", res.best_epoch, res.best_val_mse,
                keypoint::evaluate_keypoints(res.model, te), out.string().c_str());
}

struct KeypointPredictArgs {
    std::string model, out;
    std::vector<std::string> samples;
};

void run_keypoints_predict(const Globals& g, const KeypointPredictArgs& a) {
    const auto root = data_root(g);
    const auto m = dataset::load_manifest(root);
    const auto model = keypoint::KeypointModel::load(a.model);
    nlohmann::json rows = nlohmann::json::array();
    for (auto i : select_samples(m, a.samples)) {
        const auto& s = m.samples[i];
        if (!pipeline::is_preprocessed(root, s)) throw StateError(s.sample_id + " has not been preprocessed");
        const auto k = keypoint::predict_keypoints(model, codecs::load_ply(s.path(root, dataset::kProcessedCloud)));
        nlohmann::json pts = nlohmann::json::object();
        for (std::size_t j = 0; j < geomfeat::kKeypointCount; ++j)
            pts[std::string(1, geomfeat::kKeypointLabels[j])] = {k[j].x, k[j].y, k[j].z};
        rows.push_back({{"sample_id", s.sample_id}, {"points", pts}});
    }
    write_or_print(a.out, rows.dump(2) + "\n");
}

// ---- features -------------------------------------------------------------

struct FeatureArgs {
    std::string source, model;
};

void run_features(const Globals& g, const FeatureArgs& a) {
    const auto root = data_root(g);
    auto m = dataset::load_manifest(root);
    const std::string source = a.source.empty() ? (a.model.empty() ? "annotation" : "model") : a.source;
    if (source == "model" && a.model.empty()) throw UsageError("--source model needs --model");
    std::optional<keypoint::KeypointModel> model;
    if (source == "model") model = keypoint::KeypointModel::load(a.model);
    pipeline::compute_features(root, m,
                               source == "model" ? pipeline::KeypointSource::Model
                                                 : pipeline::KeypointSource::Annotation,
                               model ? &*model : nullptr);
    dataset::save_manifest(root, m);
    std::printf("%-24s", "sample");
    for (auto n : geomfeat::kFeatureNames) std::printf(" %8s", std::string(n).c_str());
    std::printf("\n");
    for (const auto& s : m.samples) {
        std::printf("%-24s", s.sample_id.c_str());
        for (std::size_t i = 0; i < geomfeat::kFeatureCount; ++i) {
            const double v = (*s.features)[i];
            std::printf(" %8.2f", i < 6 ? v : v * 180.0 / std::numbers::pi);
        }
        std::printf("\n");
    }
    std::printf("features from %s keypoints written to the manifest (distances mm, angles degrees)\n",
                source.c_str());
}

// ---- fusion ---------------------------------------------------------------

struct FusionArgs {
    bool no_geom = false, no_encoder = false, per_sample_split = false;
    std::string backbone = "small";
    std::size_t layers = 2, heads = 2, ffn_mult = 4;
    train::TrainConfig train;
    std::uint64_t split_seed = 1;
    double train_fraction = 1.0;
    std::string overall = "pooled";

    fusion::FusionConfig model_config() const {
        fusion::FusionConfig c;
        c.backbone = fusion::BackboneConfig::by_name(backbone);
        c.encoder_layers = layers;
        c.heads = heads;
        c.ffn_mult = ffn_mult;
        c.use_geometric = !no_geom;
        c.use_encoder = !no_encoder;
        c.seed = train.seed;
        c.validate();
        return c;
    }
    metrics::SplitSpec split() const { return {0.8, 0.1, 0.1, split_seed, !per_sample_split}; }
};

void add_fusion_options(CLI::App* cmd, FusionArgs& a) {
    cmd->add_flag("--no-geom", a.no_geom, "Drop the geometric features from the token sequence");
    cmd->add_flag("--no-encoder", a.no_encoder, "Skip the transformer encoder");
    cmd->add_option("--backbone", a.backbone, "Backbone variant")->check(CLI::IsMember({"small", "medium"}));
    cmd->add_option("--layers", a.layers, "Encoder layers")->check(CLI::NonNegativeNumber);
    cmd->add_option("--heads", a.heads, "Attention heads")->check(CLI::PositiveNumber);
    cmd->add_option("--ffn-mult", a.ffn_mult, "Feed-forward width multiplier")->check(CLI::PositiveNumber);
    cmd->add_option("--epochs", a.train.epochs, "Training epochs")->check(CLI::PositiveNumber);
    cmd->add_option("--batch", a.train.batch_size, "Mini-batch size")->check(CLI::PositiveNumber);
    cmd->add_option("--lr", a.train.learning_rate, "Adam learning rate")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", a.train.seed, "Initialization and shuffling seed");
    cmd->add_option("--split-seed", a.split_seed, "Train/val/test split seed");
    cmd->add_flag("--per-sample-split", a.per_sample_split, "Split samples independently instead of by duck");
    cmd->add_option("--train-fraction", a.train_fraction, "Train on a nested fraction of the training ducks")
        ->check(CLI::Range(1e-9, 1.0));
    cmd->add_option("--overall", a.overall, "Overall metrics row")->check(CLI::IsMember({"pooled", "mean"}));
}

struct SplitSamples {
    std::vector<train::FusionSample> train, val, test;
};

SplitSamples load_split(const fs::path& root, const dataset::Manifest& m, const metrics::SplitSpec& spec) {
    const auto split = metrics::split_dataset(pipeline::duck_ids(m), spec);
    return {pipeline::load_fusion_samples(root, m, split.train), pipeline::load_fusion_samples(root, m, split.val),
            pipeline::load_fusion_samples(root, m, split.test)};
}

struct FusionTrainArgs {
    FusionArgs f;
    std::string out, curve, report;
};

void run_fusion_train(const Globals& g, const FusionTrainArgs& a) {
    const auto root = data_root(g);
    const auto m = dataset::load_manifest(root);
    const auto cfg = a.f.model_config();
    auto data = load_split(root, m, a.f.split());
    const auto train_set = train::nested_subset(data.train, a.f.train_fraction, a.f.train.seed);
    std::cout << "fusion training on " << train_set.size() << " samples, " << data.val.size() << " validation, "
              << data.test.size() << " test\n";
    auto res = train::train_fusion(train_set, data.val, cfg, a.f.train, [](const train::EpochLog& e) {
        std::printf("epoch %3zu  train %.6f  val %.6f\n", e.epoch, e.train_loss, e.val_loss);
        std::fflush(stdout);
    });
    res.info = {{"split", {{"seed", a.f.split_seed}, {"grouped", !a.f.per_sample_split}}},
                {"train_fraction", a.f.train_fraction},
                {"train", a.f.train.to_json()}};
    const fs::path out = a.out.empty() ? root / "models" / "fusion.ckpt" : fs::path(a.out);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    res.save(out);
    write_or_print(a.curve.empty() ? out.string() + ".curve.csv" : a.curve, train::curve_csv(res.curve));
    if (data.test.size() < 2) {
        std::cerr << "warning: test split has " << data.test.size() << " sample(s); metrics need at least 2\n";
    } else {
        const auto rep = train::evaluate(res, data.test, overall_mode(a.f.overall));
        write_or_print(a.report.empty() ? out.string() + ".metrics.json" : a.report,
                       metrics::report_to_json(rep).dump(2) + "\n");
        std::printf("best epoch %zu (val %.6f); test set:\n%s", res.best_epoch, res.best_val_loss,
                    metrics::format_table(rep).c_str());
    }
    std::printf("saved %s\n", out.string().c_str());
}

metrics::SplitSpec split_from_checkpoint(const train::TrainedFusion& t) {
    metrics::SplitSpec s;
    if (t.info.contains("split")) {
        s.seed = t.info["split"].value("seed", std::uint64_t{1});
        s.grouped = t.info["split"].value("grouped", true);
    }
    return s;
}

std::vector<train::FusionSample> samples_for(const fs::path& root, const dataset::Manifest& m,
                                             const metrics::SplitSpec& spec, const std::string& which) {
    if (which == "all") return pipeline::load_fusion_samples(root, m, all_indices(m));
    const auto split = metrics::split_dataset(pipeline::duck_ids(m), spec);
    const auto& idx = which == "train" ? split.train : (which == "val" ? split.val : split.test);
    return pipeline::load_fusion_samples(root, m, idx);
}

nlohmann::json prediction_rows(const train::TrainedFusion& model, const std::vector<train::FusionSample>& set) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& s : set) {
        const auto y = model.predict(s);
        rows.push_back({{"sample_id", s.sample_id}, {"y_hat", std::vector<double>(y.begin(), y.end())}});
    }
    return rows;
}

struct FusionPredictArgs {
    std::string model, out, split = "test";
};

void run_fusion_predict(const Globals& g, const FusionPredictArgs& a) {
    const auto root = data_root(g);
    const auto m = dataset::load_manifest(root);
    const auto model = train::TrainedFusion::load(a.model);
    const auto set = samples_for(root, m, split_from_checkpoint(model), a.split);
    write_or_print(a.out, prediction_rows(model, set).dump(2) + "\n");
}

struct FusionEvalArgs {
    std::string predictions, model, split = "test", overall = "pooled", json;
};

void run_fusion_eval(const Globals& g, const FusionEvalArgs& a) {
    if (a.predictions.empty() == a.model.empty()) throw UsageError("pass exactly one of --predictions or --model");
    const auto root = data_root(g);
    const auto m = dataset::load_manifest(root);
    nlohmann::json rows;
    if (!a.predictions.empty()) {
        try {
            rows = nlohmann::json::parse(codecs::read_file(a.predictions));
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(a.predictions + ": " + e.what(), e.byte);
        }
    } else {
        const auto model = train::TrainedFusion::load(a.model);
        rows = prediction_rows(model, samples_for(root, m, split_from_checkpoint(model), a.split));
    }
    if (!rows.is_array()) throw ValidationError("predictions must be a JSON array of {sample_id, y_hat}");
    std::vector<dataset::Labels> pred, truth;
    for (const auto& r : rows) {
        const auto* s = r.is_object() && r.contains("sample_id") && r["sample_id"].is_string()
                            ? m.find(r["sample_id"].get<std::string>())
                            : nullptr;
        if (!s) throw ValidationError("prediction row " + r.dump() + " names no known sample");
        if (!r.contains("y_hat") || !r["y_hat"].is_array() || r["y_hat"].size() != dataset::kTargetCount)
            throw ValidationError(s->sample_id + ": y_hat must hold 8 numbers");
        dataset::Labels y{};
        for (std::size_t k = 0; k < dataset::kTargetCount; ++k) {
            if (!r["y_hat"][k].is_number()) throw ValidationError(s->sample_id + ": y_hat must hold 8 numbers");
            y[k] = r["y_hat"][k].get<double>();
        }
        pred.push_back(y);
        truth.push_back(s->labels);
    }
    const auto rep = metrics::compute_metrics(pred, truth, overall_mode(a.overall));
    std::cout << metrics::format_table(rep);
    if (!a.json.empty()) write_or_print(a.json, metrics::report_to_json(rep).dump(2) + "\n");
}

// ---- sweep ----------------------------------------------------------------

struct SweepArgs {
    FusionArgs f;
    std::vector<double> fractions{0.25, 0.5, 0.75, 1.0};
    std::string out;
};

void run_sweep(const Globals& g, const SweepArgs& a) {
    const auto root = data_root(g);
    const auto m = dataset::load_manifest(root);
    auto data = load_split(root, m, a.f.split());
    const auto cfg = a.f.model_config();
    const auto tc = a.f.train;
    std::string csv = "fraction,train_samples,r2,mape,rmse,mae\n";
    std::printf("%9s %8s %8s %9s %10s %10s\n", "fraction", "samples", "R2", "MAPE(%)", "RMSE", "MAE");
    for (double f : a.fractions) {
        const auto rows =
            train::dataset_size_sweep(data.train, data.val, data.test, {f}, cfg, tc, overall_mode(a.f.overall));
        for (const auto& r : rows) {
            const auto& rep = r.report;
            const auto& o = rep.overall;
            std::printf("%9.3f %8zu %8.4f %9.3f %10.3f %10.3f\n", r.fraction, r.train_samples, o.r2, o.mape, o.rmse,
                        o.mae);
            std::fflush(stdout);
            char line[160];
            std::snprintf(line, sizeof line, "%.6g,%zu,%.9g,%.9g,%.9g,%.9g\n", r.fraction, r.train_samples, o.r2,
                          o.mape, o.rmse, o.mae);
            csv += line;
        }
    }
    write_or_print(a.out.empty() ? (root / "models" / "sweep.csv").string() : a.out, csv);
}

// ---- annotate -------------------------------------------------------------

server::AnnotationServer* g_server = nullptr;

void on_signal(int) {
    if (g_server) g_server->stop();
}

struct AnnotateArgs {
    std::string serve, ui;
    std::size_t max_points = 20000;
};

void run_annotate(const Globals& g, const AnnotateArgs& a) {
    const auto root = data_root(g);
    const auto colon = a.serve.rfind(':');
    if (colon == std::string::npos) throw UsageError("--serve expects HOST:PORT, got " + a.serve);
    const std::string host = a.serve.substr(0, colon);
    int port = 0;
    try {
        port = std::stoi(a.serve.substr(colon + 1));
    } catch (const std::exception&) {
        throw UsageError("--serve expects HOST:PORT, got " + a.serve);
    }
    if (port < 0 || port > 65535) throw UsageError("port out of range in " + a.serve);
    server::ServerOptions opts;
    opts.max_points = a.max_points;
    if (!a.ui.empty()) opts.ui_dir = a.ui;
    server::AnnotationServer srv(root, opts);
    if (!srv.has_ui())
        std::cerr << "warning: no annotation UI bundle found" << (a.ui.empty() ? "" : " in " + a.ui)
                  << "; serving the API only\n";
    if (!srv.bind(host, port)) throw IoError("cannot listen on " + a.serve);
    g_server = &srv;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cout << "listening on http://" << host << ":" << srv.port() << std::endl;
    srv.listen_after_bind();
    g_server = nullptr;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Duck morphometry from point clouds and images"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--data", g.data, "Dataset root (manifest.json, data/)")->envname("DUCKMORPH_DATA");
    std::function<void()> action;

    SynthArgs synth_a;
    auto* synth_cmd = app.add_subcommand("synth", "Generate synthetic ducks");
    synth_cmd->add_option("--count", synth_a.count, "Number of ducks")->check(CLI::PositiveNumber);
    synth_cmd->add_option("--poses", synth_a.poses, "Captures per duck")->check(CLI::PositiveNumber);
    synth_cmd->add_option("--seed", synth_a.seed, "Generator seed");
    synth_cmd->add_option("--first-duck", synth_a.first_duck, "Index of the first duck id");
    synth_cmd->add_option("--annotate", synth_a.annotate, "Samples that get an annotation.json (-1 = all)");
    synth_cmd->add_option("--image-size", synth_a.image_size, "Raw image edge in pixels")->check(CLI::Range(16, 4096));
    synth_cmd->callback([&] { action = [&] { run_synth(g, synth_a); }; });

    PreprocessArgs pre_a;
    auto* pre_cmd = app.add_subcommand("preprocess", "Denoise, cluster and downsample clouds; mask and resize images");
    pre_cmd->add_option("--sample", pre_a.samples, "Only these sample ids");
    pre_cmd->add_option("--neighbors", pre_a.opts.cloud.neighbors, "Outlier filter neighbours")->check(CLI::PositiveNumber);
    pre_cmd->add_option("--sigma", pre_a.opts.cloud.sigma, "Outlier filter multiplier")->check(CLI::NonNegativeNumber);
    pre_cmd->add_option("--cluster-eps", pre_a.opts.cloud.cluster_eps, "Cluster radius in mm")->check(CLI::PositiveNumber);
    pre_cmd->add_option("--min-cluster", pre_a.opts.cloud.min_cluster, "Smallest retained cluster");
    pre_cmd->add_option("--cluster-index", pre_a.opts.cloud.cluster_index, "Retained cluster to keep, 0 = largest");
    pre_cmd->add_option("--near", pre_a.opts.depth_near, "Depth window start in mm");
    pre_cmd->add_option("--far", pre_a.opts.depth_far, "Depth window end in mm");
    pre_cmd->callback([&] { action = [&] { run_preprocess(g, pre_a); }; });

    auto* kp_cmd = app.add_subcommand("keypoints", "Keypoint network");
    kp_cmd->require_subcommand(1);
    KeypointTrainArgs kpt_a;
    auto* kpt_cmd = kp_cmd->add_subcommand("train", "Train on annotated samples");
    kpt_cmd->add_option("--out", kpt_a.out, "Checkpoint path (default DATA/models/keypoint.ckpt)");
    kpt_cmd->add_option("--curve", kpt_a.curve, "Training curve CSV");
    kpt_cmd->add_option("--epochs", kpt_a.train.epochs, "Epochs")->check(CLI::PositiveNumber);
    kpt_cmd->add_option("--batch", kpt_a.train.batch_size, "Mini-batch size")->check(CLI::PositiveNumber);
    kpt_cmd->add_option("--lr", kpt_a.train.learning_rate, "Adam learning rate")->check(CLI::PositiveNumber);
    kpt_cmd->add_option("--seed", kpt_a.train.seed, "Shuffling seed");
    kpt_cmd->add_option("--split-seed", kpt_a.split_seed, "Train/val/test split seed");
    kpt_cmd->callback([&] { action = [&] { run_keypoints_train(g, kpt_a); }; });
    KeypointPredictArgs kpp_a;
    auto* kpp_cmd = kp_cmd->add_subcommand("predict", "Predict keypoints A-G in millimetres");
    kpp_cmd->add_option("--model", kpp_a.model, "Keypoint checkpoint")->required()->check(CLI::ExistingFile);
    kpp_cmd->add_option("--sample", kpp_a.samples, "Only these sample ids");
    kpp_cmd->add_option("--out", kpp_a.out, "Output JSON (default stdout)");
    kpp_cmd->callback([&] { action = [&] { run_keypoints_predict(g, kpp_a); }; });

    FeatureArgs feat_a;
    auto* feat_cmd = app.add_subcommand("features", "Compute the 10 geometric features into the manifest");
    feat_cmd->add_option("--source", feat_a.source, "Keypoints from annotations or model predictions")
        ->check(CLI::IsMember({"annotation", "model"}));
    feat_cmd->add_option("--model", feat_a.model, "Keypoint checkpoint")->check(CLI::ExistingFile);
    feat_cmd->callback([&] { action = [&] { run_features(g, feat_a); }; });

    auto* fu_cmd = app.add_subcommand("fusion", "Multimodal regression model");
    fu_cmd->require_subcommand(1);
    FusionTrainArgs fut_a;
    auto* fut_cmd = fu_cmd->add_subcommand("train", "Train and report test metrics");
    add_fusion_options(fut_cmd, fut_a.f);
    fut_cmd->add_option("--out", fut_a.out, "Checkpoint path (default DATA/models/fusion.ckpt)");
    fut_cmd->add_option("--curve", fut_a.curve, "Training curve CSV (default OUT.curve.csv)");
    fut_cmd->add_option("--report", fut_a.report, "Test metrics JSON (default OUT.metrics.json)");
    fut_cmd->callback([&] { action = [&] { run_fusion_train(g, fut_a); }; });
    FusionPredictArgs fup_a;
    auto* fup_cmd = fu_cmd->add_subcommand("predict", "Predict the 8 targets in original units");
    fup_cmd->add_option("--model", fup_a.model, "Fusion checkpoint")->required()->check(CLI::ExistingFile);
    fup_cmd->add_option("--split", fup_a.split, "Samples to predict")->check(CLI::IsMember({"train", "val", "test", "all"}));
    fup_cmd->add_option("--out", fup_a.out, "Output JSON (default stdout)");
    fup_cmd->callback([&] { action = [&] { run_fusion_predict(g, fup_a); }; });
    FusionEvalArgs fue_a;
    auto* fue_cmd = fu_cmd->add_subcommand("eval", "Metrics of predictions against manifest labels");
    fue_cmd->add_option("--predictions", fue_a.predictions, "Predictions JSON")->check(CLI::ExistingFile);
    fue_cmd->add_option("--model", fue_a.model, "Fusion checkpoint to predict with")->check(CLI::ExistingFile);
    fue_cmd->add_option("--split", fue_a.split, "Samples for --model")->check(CLI::IsMember({"train", "val", "test", "all"}));
    fue_cmd->add_option("--overall", fue_a.overall, "Overall metrics row")->check(CLI::IsMember({"pooled", "mean"}));
    fue_cmd->add_option("--json", fue_a.json, "Also write the report as JSON");
    fue_cmd->callback([&] { action = [&] { run_fusion_eval(g, fue_a); }; });

    SweepArgs sw_a;
    auto* sw_cmd = app.add_subcommand("sweep", "Retrain on nested fractions of the training ducks");
    add_fusion_options(sw_cmd, sw_a.f);
    sw_cmd->add_option("--fractions", sw_a.fractions, "Fractions in (0, 1]")->delimiter(',')->check(CLI::Range(1e-9, 1.0));
    sw_cmd->add_option("--out", sw_a.out, "CSV path (default DATA/models/sweep.csv)");
    sw_cmd->callback([&] { action = [&] { run_sweep(g, sw_a); }; });

    AnnotateArgs an_a;
    auto* an_cmd = app.add_subcommand("annotate", "Serve the annotation HTTP API");
    an_cmd->add_option("--serve", an_a.serve, "Listen address HOST:PORT")->required();
    an_cmd->add_option("--ui", an_a.ui, "Directory with the UI bundle (index.html)")->envname("DUCKMORPH_UI");
    an_cmd->add_option("--max-points", an_a.max_points, "Default decimation for cloud requests")->check(CLI::PositiveNumber);
    an_cmd->callback([&] { action = [&] { run_annotate(g, an_a); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        fail_line("usage", e.what());
        std::cerr << "duckmorph: " << e.what() << "\nRun with --help for usage.\n";
        return 2;
    }

    try {
        action();
        return 0;
    } catch (const UsageError& e) {
        fail_line("usage", e.what());
        std::cerr << "duckmorph: " << e.what() << "\nRun with --help for usage.\n";
        return 2;
    } catch (const Error& e) {
        fail_line(e.kind(), e.what());
        std::cerr << "duckmorph: " << e.kind() << " error: " << e.what() << "\n";
        return 1;
    } catch (const fs::filesystem_error& e) {
        fail_line("io", e.what());
        std::cerr << "duckmorph: io error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        fail_line("internal", e.what());
        std::cerr << "duckmorph: unexpected error: " << e.what() << "\n";
        return 1;
    }
}
