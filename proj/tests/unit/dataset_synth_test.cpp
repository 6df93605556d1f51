#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <set>

#include <nlohmann/json.hpp>

#include "duckmorph/codecs.hpp"
#include "duckmorph/dataset.hpp"
#include "duckmorph/errors.hpp"
#include "duckmorph/pointcloud.hpp"
#include "duckmorph/synth.hpp"

using namespace duckmorph;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

synth::SynthConfig small_render() {
    synth::SynthConfig c;
    c.image_size = 64;
    return c;
}

nlohmann::json good_annotation() {
    return {{"cloud_id", "duck_0000_p1"},
            {"points",
             {{"A", {1, 2, 3}}, {"B", {4, 5, 6}}, {"C", {7, 8, 9}}, {"D", {0, 0, 0}}, {"E", {1, 1, 1}},
              {"F", {2, 2, 2}}, {"G", {3, 3, 3}}}},
            {"annotator", "tester"},
            {"timestamp", "2024-01-01T00:00:00Z"}};
}

bool has_field(const std::vector<dataset::FieldError>& errs, const std::string& field) {
    return std::any_of(errs.begin(), errs.end(), [&](const auto& e) { return e.field == field; });
}

} // namespace

TEST(Synth, SameSeedSameSample) {
    Rng rng(1);
    const auto shape = synth::sample_shape(rng);
    const auto pose = synth::sample_pose(rng);
    const auto a = synth::synth_duck(shape, pose, 77, small_render());
    const auto b = synth::synth_duck(shape, pose, 77, small_render());
    EXPECT_EQ(a.cloud.points, b.cloud.points);
    EXPECT_EQ(a.top.data, b.top.data);
    EXPECT_EQ(a.depth.data, b.depth.data);
    EXPECT_EQ(a.outliers, b.outliers);
    const auto c = synth::synth_duck(shape, pose, 78, small_render());
    EXPECT_NE(a.cloud.points, c.cloud.points);
}

TEST(Synth, CloudHasEnoughPointsAndMarkedOutliers) {
    Rng rng(2);
    const auto s = synth::synth_duck(synth::sample_shape(rng), synth::sample_pose(rng), 3, small_render());
    EXPECT_GE(s.cloud.size(), 50000u);
    EXPECT_TRUE(std::is_sorted(s.outliers.begin(), s.outliers.end()));
    EXPECT_GT(s.outliers.size(), 1500u);
    EXPECT_LT(s.outliers.back(), s.cloud.size());
    EXPECT_EQ(s.top.width, 64u);
    EXPECT_EQ(s.mask_side.height, 64u);
}

TEST(Synth, LabelsFollowKeypoints) {
    Rng rng(3);
    for (int i = 0; i < 25; ++i) {
        auto shape = synth::sample_shape(rng);
        const auto noisy = synth::labels(shape);
        shape.label_noise.fill(1.0);
        const auto clean = synth::labels(shape);
        const auto k = synth::keypoints(shape, synth::Pose{});
        EXPECT_NEAR(clean[1], geomfeat::distance(k[0], k[4]) / 10, 0.01 * clean[1]);
        EXPECT_NEAR(clean[7], geomfeat::distance(k[5], k[6]) / 10, 0.01 * clean[7]);
        for (std::size_t t = 0; t < clean.size(); ++t) {
            EXPECT_GT(clean[t], 0);
            EXPECT_NEAR(noisy[t] / clean[t], 1.0, 0.1);
        }
    }
}

TEST(Synth, YawAndTranslationAreRigid) {
    Rng rng(4);
    const auto shape = synth::sample_shape(rng);
    const auto ref = synth::keypoints(shape, synth::Pose{});
    const auto moved = synth::keypoints(shape, synth::Pose{1.1, 0.0, 40, -25});
    for (std::size_t i = 0; i < 7; ++i)
        for (std::size_t j = i + 1; j < 7; ++j)
            EXPECT_NEAR(geomfeat::distance(ref[i], ref[j]), geomfeat::distance(moved[i], moved[j]), 1e-9);
}

TEST(Synth, RejectsImpossibleShapes) {
    synth::DuckShape s;
    s.torso_a = -1;
    EXPECT_THROW(s.validate(), ArgumentError);
    EXPECT_THROW(synth::synth_duck({}, synth::Pose{0, 2.0, 0, 0}, 1), ArgumentError);
}

TEST(Preprocess, KeepsTheBirdAndDropsDebris) {
    Rng rng(5);
    const auto s = synth::synth_duck(synth::sample_shape(rng), synth::sample_pose(rng), 9, small_render());
    const auto r = pointcloud::preprocess_cloud(s.cloud, {});
    EXPECT_EQ(r.cloud.size(), 8192u);
    const std::set<std::size_t> outliers(s.outliers.begin(), s.outliers.end());
    const std::set<std::size_t> kept(r.cluster_indices.begin(), r.cluster_indices.end());
    std::size_t bird = 0, bird_kept = 0, junk_kept = 0;
    for (std::size_t i = 0; i < s.cloud.size(); ++i) {
        if (outliers.count(i)) {
            junk_kept += kept.count(i);
        } else {
            ++bird;
            bird_kept += kept.count(i);
        }
    }
    EXPECT_GE(double(bird_kept), 0.95 * double(bird));
    EXPECT_LT(double(junk_kept), 0.05 * double(outliers.size()));
}

TEST(Annotation, ValidatesEveryField) {
    EXPECT_TRUE(dataset::validate_annotation(good_annotation()).empty());
    const auto a = dataset::annotation_from_json(good_annotation());
    EXPECT_EQ(a.points[2].z, 9);
    EXPECT_EQ(dataset::annotation_to_json(a), good_annotation());

    auto j = good_annotation();
    j["points"].erase("C");
    auto errs = dataset::validate_annotation(j);
    ASSERT_EQ(errs.size(), 1u);
    EXPECT_EQ(errs[0].field, "points.C");

    j = good_annotation();
    j["points"]["A"] = {1, 2};
    j["points"]["H"] = {1, 2, 3};
    j.erase("annotator");
    errs = dataset::validate_annotation(j);
    EXPECT_TRUE(has_field(errs, "points.A"));
    EXPECT_TRUE(has_field(errs, "points.H"));
    EXPECT_TRUE(has_field(errs, "annotator"));
    EXPECT_THROW(dataset::annotation_from_json(j), ValidationError);

    j = good_annotation();
    j["points"]["G"] = {1, "x", 3};
    EXPECT_TRUE(has_field(dataset::validate_annotation(j), "points.G"));
    EXPECT_FALSE(dataset::validate_annotation(nlohmann::json::array()).empty());
}

TEST(Labels, MustAllBePositive) {
    dataset::Labels l;
    l.fill(3.5);
    EXPECT_EQ(dataset::labels_from_json(dataset::labels_to_json(l)), l);
    auto j = dataset::labels_to_json(l);
    j["weight"] = -2;
    j.erase("neck_length");
    try {
        dataset::labels_from_json(j);
        FAIL();
    } catch (const ValidationError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("weight must be positive"), std::string::npos);
        EXPECT_NE(msg.find("neck_length missing"), std::string::npos);
    }
}

TEST(Manifest, EmptyDirectoryHasNoSamples) {
    TempDir dir("duckmorph_manifest_empty");
    EXPECT_TRUE(dataset::build_manifest(dir.path).samples.empty());
    fs::create_directories(dir.path / "data");
    EXPECT_TRUE(dataset::build_manifest(dir.path).samples.empty());
    EXPECT_THROW(dataset::load_manifest(dir.path), IoError);
}

TEST(Manifest, WrittenDatasetRoundTripsAndReportsProblems) {
    TempDir dir("duckmorph_manifest_poses");
    synth::DatasetSpec spec;
    spec.ducks = 1;
    spec.poses = 3;
    spec.annotate = 2;
    spec.render = small_render();
    const auto m = synth::write_dataset(dir.path, spec);
    ASSERT_EQ(m.samples.size(), 3u);
    EXPECT_EQ(m.groups().size(), 1u);
    EXPECT_EQ(m.groups().begin()->second.size(), 3u);
    EXPECT_TRUE(m.samples[0].annotated);
    EXPECT_FALSE(m.samples[2].annotated);

    const auto loaded = dataset::load_manifest(dir.path);
    EXPECT_EQ(dataset::manifest_to_json(loaded), dataset::manifest_to_json(m));
    const auto ann = dataset::annotation_from_json(
        nlohmann::json::parse(codecs::read_file(m.samples[0].path(dir.path, "annotation.json"))));
    EXPECT_EQ(ann.cloud_id, m.samples[0].sample_id);

    // negative weight in one sample, missing image in another: both named
    auto labels_file = m.samples[0].path(dir.path, "labels.json");
    auto j = nlohmann::json::parse(codecs::read_file(labels_file));
    j["weight"] = -100.0;
    codecs::write_file_atomic(labels_file, j.dump());
    fs::remove(m.samples[1].path(dir.path, "side.ppm"));
    try {
        dataset::build_manifest(dir.path);
        FAIL();
    } catch (const ValidationError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find(m.samples[0].sample_id + ": labels.json: weight must be positive"), std::string::npos);
        EXPECT_NE(msg.find(m.samples[1].sample_id + ": missing side.ppm"), std::string::npos);
    }
    try {
        dataset::load_manifest(dir.path);
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find(m.samples[1].dir + "/side.ppm"), std::string::npos);
    }
}

TEST(Manifest, IdentifiersAreSafe) {
    EXPECT_TRUE(dataset::valid_identifier("duck_0001_p2"));
    EXPECT_FALSE(dataset::valid_identifier(""));
    EXPECT_FALSE(dataset::valid_identifier(".."));
    EXPECT_FALSE(dataset::valid_identifier("a/b"));
    EXPECT_FALSE(dataset::valid_identifier("a b"));
}
