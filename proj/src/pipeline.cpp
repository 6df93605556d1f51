#include "duckmorph/pipeline.hpp"

#include <nlohmann/json.hpp>

#include "duckmorph/codecs.hpp"
#include "duckmorph/errors.hpp"
#include "duckmorph/geomfeat.hpp"

namespace duckmorph::pipeline {

namespace fs = std::filesystem;

PreprocessReport preprocess_sample(const fs::path& root, const dataset::Manifest& m, const dataset::SampleRecord& s,
                                   const PreprocessOptions& opts) {
    PreprocessReport rep;
    rep.sample_id = s.sample_id;
    const auto raw = codecs::load_ply(s.path(root, "cloud.ply"), m.cloud_unit_scale);
    rep.raw_points = raw.size();
    pointcloud::PreprocessResult res;
    try {
        res = pointcloud::preprocess_cloud(raw, opts.cloud);
    } catch (const ArgumentError& e) {
        throw ArgumentError(s.sample_id + ": " + e.what());
    }
    rep.inliers = res.inlier_indices.size();
    rep.cluster_points = res.cluster_indices.size();
    rep.retained_clusters = res.retained_clusters;

    const auto mask_top = codecs::load_pgm(s.path(root, "mask_top.pgm"));
    const auto mask_side = codecs::load_pgm(s.path(root, "mask_side.pgm"));
    const auto top = imaging::apply_mask(codecs::load_ppm(s.path(root, "top.ppm")), mask_top);
    const auto side = imaging::apply_mask(codecs::load_ppm(s.path(root, "side.ppm")), mask_side);
    // The depth camera shares the side view's framing.
    const auto depth = imaging::apply_mask(
        imaging::depth_to_gray(codecs::load_pgm16(s.path(root, "depth.pgm")), opts.depth_near, opts.depth_far),
        mask_side);
    const std::size_t n = opts.image_size;
    codecs::save_ply(s.path(root, dataset::kProcessedCloud), res.cloud);
    codecs::save_ppm(s.path(root, dataset::kProcessedTop), imaging::resize_bilinear(top, n, n));
    codecs::save_ppm(s.path(root, dataset::kProcessedSide), imaging::resize_bilinear(side, n, n));
    codecs::save_pgm(s.path(root, dataset::kProcessedDepth), imaging::resize_bilinear(depth, n, n));
    return rep;
}

bool is_preprocessed(const fs::path& root, const dataset::SampleRecord& s) {
    for (auto f : {dataset::kProcessedCloud, dataset::kProcessedTop, dataset::kProcessedSide, dataset::kProcessedDepth})
        if (!fs::exists(s.path(root, f))) return false;
    return true;
}

namespace {

void require_preprocessed(const fs::path& root, const dataset::SampleRecord& s) {
    if (!is_preprocessed(root, s)) throw StateError(s.sample_id + " has not been preprocessed");
}

dataset::Annotation read_annotation(const fs::path& root, const dataset::SampleRecord& s) {
    if (!s.annotated) throw StateError(s.sample_id + " has no annotation");
    const auto file = s.path(root, "annotation.json");
    try {
        return dataset::annotation_from_json(nlohmann::json::parse(codecs::read_file(file)));
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(file.string() + ": " + e.what(), e.byte);
    }
}

} // namespace

std::size_t compute_features(const fs::path& root, dataset::Manifest& m, KeypointSource source,
                             const keypoint::KeypointModel* model) {
    if (source == KeypointSource::Model && (model == nullptr || !model->trained()))
        throw StateError("feature extraction from predictions needs a trained keypoint model");
    std::size_t updated = 0;
    for (auto& s : m.samples) {
        geomfeat::KeypointSet k;
        if (source == KeypointSource::Annotation) {
            k = read_annotation(root, s).points;
        } else {
            require_preprocessed(root, s);
            k = keypoint::predict_keypoints(*model, codecs::load_ply(s.path(root, dataset::kProcessedCloud)));
        }
        try {
            s.features = geomfeat::extract_features(k).values;
        } catch (const Error& e) {
            throw ValidationError(s.sample_id + ": " + e.what());
        }
        ++updated;
    }
    return updated;
}

std::vector<keypoint::KeypointExample> load_keypoint_examples(const fs::path& root, const dataset::Manifest& m,
                                                              const std::vector<std::size_t>& indices) {
    std::vector<keypoint::KeypointExample> out;
    for (auto i : indices) {
        const auto& s = m.samples.at(i);
        require_preprocessed(root, s);
        out.push_back({s.sample_id, codecs::load_ply(s.path(root, dataset::kProcessedCloud)),
                       read_annotation(root, s).points});
    }
    return out;
}

std::vector<train::FusionSample> load_fusion_samples(const fs::path& root, const dataset::Manifest& m,
                                                     const std::vector<std::size_t>& indices) {
    std::vector<train::FusionSample> out;
    for (auto i : indices) {
        const auto& s = m.samples.at(i);
        require_preprocessed(root, s);
        if (!s.features) throw StateError(s.sample_id + " has no geometric features; run the features step");
        train::FusionSample f;
        f.sample_id = s.sample_id;
        f.duck_id = s.duck_id;
        f.top = imaging::to_tensor(codecs::load_ppm(s.path(root, dataset::kProcessedTop)));
        f.side = imaging::to_tensor(codecs::load_ppm(s.path(root, dataset::kProcessedSide)));
        f.depth = imaging::to_tensor(codecs::load_pgm(s.path(root, dataset::kProcessedDepth)));
        f.features = *s.features;
        f.labels = s.labels;
        out.push_back(std::move(f));
    }
    return out;
}

std::vector<std::string> duck_ids(const dataset::Manifest& m) {
    std::vector<std::string> out;
    for (const auto& s : m.samples) out.push_back(s.duck_id);
    return out;
}

} // namespace duckmorph::pipeline
