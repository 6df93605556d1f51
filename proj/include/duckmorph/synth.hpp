#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "duckmorph/dataset.hpp"
#include "duckmorph/geometry.hpp"
#include "duckmorph/geomfeat.hpp"
#include "duckmorph/imaging.hpp"
#include "duckmorph/rng.hpp"

// Procedural stand-in for real duck captures: a union of ellipsoids posed on
// a floor, sampled into a noisy point cloud and ray-cast into orthographic
// top and side views. All lengths in millimetres.
namespace duckmorph::synth {

// Per-duck body dimensions. Frame: x forward, y left, z up, feet on z = 0.
struct DuckShape {
    double torso_a = 140, torso_b = 64, torso_c = 58; // torso semi-axes
    double neck_length = 105;                         // neck base to head centre, straight line
    double neck_radius = 19;
    double head_radius = 26;
    double beak_length = 52;
    double beak_width = 13;
    double beak_height = 7;
    double leg_length = 75; // hip to ground
    double leg_radius = 6;
    double foot_length = 55;
    double foot_width = 22;
    double foot_height = 6;
    double tail_length = 35;
    double density = 0.85; // g / cm^3, torso + neck + head
    // Multiplicative measurement noise per label, in target order.
    std::array<double, dataset::kTargetCount> label_noise{1, 1, 1, 1, 1, 1, 1, 1};

    void validate() const;
    nlohmann::json to_json() const;
};

// Posture of one capture of a duck.
struct Pose {
    double yaw = 0;       // radians about +z
    double neck_bend = 0; // radians added to the neck elevation
    double tx = 0, ty = 0;

    nlohmann::json to_json() const;
};

DuckShape sample_shape(Rng& rng);
Pose sample_pose(Rng& rng);

struct SynthConfig {
    std::size_t image_size = 256;
    double view_half_extent = 400; // mm covered either side of the origin
    double side_floor_z = -20;     // lowest z visible in the side view
    double camera_distance = 1500; // side camera plane at y = -camera_distance
    double wall_y = 600;           // background wall behind the duck
    std::size_t min_points = 50000;
    double points_per_mm2 = 0.55;
    double noise_sigma = 0.5;
    double outlier_fraction = 0.005;
    std::size_t debris_points = 1500;
};

struct SynthSample {
    PointCloud cloud;
    std::vector<std::size_t> outliers; // indices of injected outliers and debris, ascending
    imaging::RgbImage top, side;
    imaging::GrayImage mask_top, mask_side;
    imaging::DepthImage depth;
    geomfeat::KeypointSet keypoints; // posed, millimetres
    dataset::Labels labels{};
};

// Ground-truth keypoints of a shape in a pose.
geomfeat::KeypointSet keypoints(const DuckShape& shape, const Pose& pose);

// The eight morphometric labels in target units, measured in the reference
// pose (neck_bend = 0) with the shape's label noise applied.
dataset::Labels labels(const DuckShape& shape);

// `seed` drives surface sampling, sensor noise, outliers and image texture.
SynthSample synth_duck(const DuckShape& shape, const Pose& pose, std::uint64_t seed, const SynthConfig& cfg = {});

struct DatasetSpec {
    std::size_t ducks = 10;
    std::size_t poses = 2;
    std::uint64_t seed = 1;
    // Number of samples (in generation order) that get an annotation.json
    // with their true keypoints; SIZE_MAX annotates all.
    std::size_t annotate = SIZE_MAX;
    std::size_t first_duck = 0;
    SynthConfig render;
};

// Writes root/data/<duck_id>/<sample_id>/ folders plus root/manifest.json.
dataset::Manifest write_dataset(const std::filesystem::path& root, const DatasetSpec& spec);

} // namespace duckmorph::synth
