#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "duckmorph/geomfeat.hpp"

namespace duckmorph::dataset {

inline constexpr std::size_t kTargetCount = 8;

struct TargetInfo {
    std::string_view key;
    std::string_view display;
    std::string_view unit;
};

inline constexpr std::array<TargetInfo, kTargetCount> kTargets{{
    {"weight", "Weight", "g"},
    {"body_diagonal_length", "Body diagonal length", "cm"},
    {"neck_length", "Neck length", "cm"},
    {"semi_diving_length", "Semi-diving length", "cm"},
    {"keel_length", "Keel length", "cm"},
    {"chest_width", "Chest width", "cm"},
    {"chest_depth", "Chest depth", "cm"},
    {"tibia_length", "Tibia length", "cm"},
}};

using Labels = std::array<double, kTargetCount>;

// ---- annotations ---------------------------------------------------------

struct Annotation {
    std::string cloud_id;
    geomfeat::KeypointSet points; // millimetres
    std::string annotator;
    std::string timestamp;
};

struct FieldError {
    std::string field;
    std::string message;
};

// Returns every schema violation; empty means valid.
std::vector<FieldError> validate_annotation(const nlohmann::json& j);
// Throws ValidationError listing the violations.
Annotation annotation_from_json(const nlohmann::json& j);
nlohmann::json annotation_to_json(const Annotation& a);

// ---- labels file ---------------------------------------------------------

// labels.json in a sample folder: {"weight": 1820.5, ...} in target units.
Labels labels_from_json(const nlohmann::json& j);
nlohmann::json labels_to_json(const Labels& labels);

// ---- manifest ------------------------------------------------------------

inline constexpr std::array<std::string_view, 6> kRequiredFiles{"cloud.ply", "top.ppm", "side.ppm",
                                                                "depth.pgm", "mask_top.pgm", "mask_side.pgm"};

// Artifacts written by preprocessing, next to the raw files.
inline constexpr std::string_view kProcessedCloud = "cloud_8192.ply";
inline constexpr std::string_view kProcessedTop = "top_128.ppm";
inline constexpr std::string_view kProcessedSide = "side_128.ppm";
inline constexpr std::string_view kProcessedDepth = "depth_128.pgm";

struct SampleRecord {
    std::string sample_id;
    std::string duck_id;
    std::string dir; // relative to the dataset root, "data/<duck>/<sample>"
    bool annotated = false;
    Labels labels{};
    std::optional<std::array<double, geomfeat::kFeatureCount>> features;

    std::filesystem::path path(const std::filesystem::path& root, std::string_view file) const {
        return root / dir / file;
    }
};

struct Manifest {
    double cloud_unit_scale = 1.0; // multiply PLY coordinates by this to get millimetres
    std::vector<SampleRecord> samples;

    const SampleRecord* find(std::string_view sample_id) const;
    SampleRecord* find(std::string_view sample_id);
    // duck_id -> sample indices, in manifest order
    std::map<std::string, std::vector<std::size_t>> groups() const;
};

nlohmann::json manifest_to_json(const Manifest& m);
Manifest manifest_from_json(const nlohmann::json& j);

// Scans root/data/<duck_id>/<sample_id>/ folders (sorted by name) and reads
// each labels.json. Throws ValidationError naming every offending sample.
Manifest build_manifest(const std::filesystem::path& root);

// Reads root/manifest.json and checks every referenced file exists.
Manifest load_manifest(const std::filesystem::path& root);
void save_manifest(const std::filesystem::path& root, const Manifest& m);

// Sample ids must be usable as path components and URL segments.
bool valid_identifier(std::string_view id);

} // namespace duckmorph::dataset
