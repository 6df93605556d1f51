#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "duckmorph/dataset.hpp"
#include "duckmorph/imaging.hpp"
#include "duckmorph/keypoint.hpp"
#include "duckmorph/pointcloud.hpp"
#include "duckmorph/train.hpp"

// Dataset-level steps shared by the command line and the acceptance runs.
namespace duckmorph::pipeline {

struct PreprocessOptions {
    pointcloud::PreprocessConfig cloud;
    double depth_near = imaging::kDefaultNear;
    double depth_far = imaging::kDefaultFar;
    std::size_t image_size = 128;
};

struct PreprocessReport {
    std::string sample_id;
    std::size_t raw_points = 0;
    std::size_t inliers = 0;
    std::size_t cluster_points = 0;
    std::size_t retained_clusters = 0;
};

// Writes the 8192-point cloud (millimetres) and the masked, resized images
// next to the sample's raw files.
PreprocessReport preprocess_sample(const std::filesystem::path& root, const dataset::Manifest& m,
                                   const dataset::SampleRecord& s, const PreprocessOptions& opts = {});

bool is_preprocessed(const std::filesystem::path& root, const dataset::SampleRecord& s);

// Keypoints for feature extraction: the annotation, or the model's
// prediction on the processed cloud.
enum class KeypointSource { Annotation, Model };

// Fills `features` for every sample in `m` and returns the number updated.
// With KeypointSource::Model, `model` must be trained.
std::size_t compute_features(const std::filesystem::path& root, dataset::Manifest& m, KeypointSource source,
                             const keypoint::KeypointModel* model = nullptr);

// Keypoint training examples from annotated, preprocessed samples.
std::vector<keypoint::KeypointExample> load_keypoint_examples(const std::filesystem::path& root,
                                                              const dataset::Manifest& m,
                                                              const std::vector<std::size_t>& indices);

// Model-ready samples; every sample must be preprocessed and have features.
std::vector<train::FusionSample> load_fusion_samples(const std::filesystem::path& root, const dataset::Manifest& m,
                                                     const std::vector<std::size_t>& indices);

std::vector<std::string> duck_ids(const dataset::Manifest& m);

template <typename T>
std::vector<T> pick(const std::vector<T>& all, const std::vector<std::size_t>& indices) {
    std::vector<T> out;
    out.reserve(indices.size());
    for (auto i : indices) out.push_back(all.at(i));
    return out;
}

} // namespace duckmorph::pipeline
