#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "duckmorph/errors.hpp"
#include "duckmorph/imaging.hpp"
#include "duckmorph/rng.hpp"

using namespace duckmorph;
using namespace duckmorph::imaging;

TEST(DepthToGray, WindowEndpointsAndOutOfRange) {
    DepthImage d{5, 1, {0, 399, 400, 12000, 12001}};
    auto g = depth_to_gray(d);
    EXPECT_EQ(g.data, (std::vector<std::uint8_t>{0, 0, 0, 255, 0}));
}

TEST(DepthToGray, Midpoint) {
    DepthImage d{1, 1, {6200}};
    EXPECT_EQ(depth_to_gray(d).data[0], 128); // 127.5 rounds half away from zero
}

TEST(DepthToGray, MonotoneInsideWindow) {
    DepthImage d = DepthImage::filled(11601, 1);
    for (std::size_t i = 0; i < d.data.size(); ++i) d.data[i] = static_cast<std::uint16_t>(400 + i);
    auto g = depth_to_gray(d);
    for (std::size_t i = 1; i < g.data.size(); ++i) EXPECT_LE(g.data[i - 1], g.data[i]);
}

TEST(DepthToGray, RejectsEmptyWindow) {
    EXPECT_THROW(depth_to_gray(DepthImage::filled(1, 1), 500, 500), ArgumentError);
}

TEST(Mask, ZeroesMaskedPixelsOnly) {
    RgbImage img = RgbImage::filled(2, 1, 200);
    GrayImage mask{2, 1, {0, 7}};
    auto out = apply_mask(img, mask);
    EXPECT_EQ(out.data, (std::vector<std::uint8_t>{0, 0, 0, 200, 200, 200}));
    EXPECT_THROW(apply_mask(img, GrayImage::filled(1, 1)), DimensionError);
}

TEST(Resize, ConstantImageStaysConstant) {
    auto out = resize_bilinear(GrayImage::filled(37, 19, 93), 128, 128);
    EXPECT_EQ(out.width, 128u);
    EXPECT_EQ(out.height, 128u);
    for (auto v : out.data) EXPECT_EQ(v, 93);
}

TEST(Resize, CornersAreAligned) {
    Rng rng(1);
    GrayImage img = GrayImage::filled(9, 7);
    for (auto& v : img.data) v = static_cast<std::uint8_t>(rng.below(256));
    auto out = resize_bilinear(img, 20, 31);
    EXPECT_EQ(out.at(0, 0), img.at(0, 0));
    EXPECT_EQ(out.at(30, 0), img.at(8, 0));
    EXPECT_EQ(out.at(0, 19), img.at(0, 6));
    EXPECT_EQ(out.at(30, 19), img.at(8, 6));
}

TEST(Resize, LinearRampUpsamples) {
    GrayImage ramp{2, 1, {0, 100}};
    auto out = resize_bilinear(ramp, 1, 5);
    EXPECT_EQ(out.data, (std::vector<std::uint8_t>{0, 25, 50, 75, 100}));
}

TEST(Resize, SameSizeIsIdentity) {
    GrayImage img{2, 2, {1, 2, 3, 4}};
    EXPECT_EQ(resize_bilinear(img, 2, 2), img);
}

TEST(ToTensor, ChannelMajorLayout) {
    RgbImage img{2, 1, {255, 0, 0, 0, 0, 255}};
    auto t = to_tensor(img);
    EXPECT_EQ(t.shape(), (tensor::Shape{3, 1, 2}));
    EXPECT_FLOAT_EQ(t.at(0), 1.0f);
    EXPECT_FLOAT_EQ(t.at(5), 1.0f);
}

TEST(Scaler, MapsTrainingRangeToUnitInterval) {
    MinMaxScaler s;
    s.fit({{0, 5, 3}, {10, 5, 1}});
    EXPECT_EQ(s.transform({0, 5, 1}), (std::vector<double>{0, 0.5, 0}));
    EXPECT_EQ(s.transform({10, 9, 3}), (std::vector<double>{1, 0.5, 1}));
    EXPECT_EQ(s.inverse_transform({0.5, 0.5, 0.5}), (std::vector<double>{5, 5, 2}));
}

TEST(Scaler, RefitAndMisuseAreErrors) {
    MinMaxScaler s;
    EXPECT_THROW(s.transform({1}), StateError);
    s.fit({{1, 2}});
    EXPECT_THROW(s.fit({{1, 2}}), StateError);
    EXPECT_THROW(s.transform({1}), DimensionError);
}

TEST(Scaler, JsonRoundTripPreservesTransform) {
    Rng rng(2);
    std::vector<std::vector<double>> rows(30, std::vector<double>(4));
    for (auto& r : rows)
        for (auto& v : r) v = rng.uniform(-100, 100);
    MinMaxScaler s;
    s.fit(rows);
    auto back = MinMaxScaler::from_json(nlohmann::json::parse(s.to_json().dump()));
    for (auto& r : rows) EXPECT_EQ(s.transform(r), back.transform(r));
}

TEST(Scaler, InverseUndoesTransformProperty) {
    Rng rng(3);
    for (int t = 0; t < 20; ++t) {
        std::vector<std::vector<double>> rows(5, std::vector<double>(3));
        for (auto& r : rows)
            for (auto& v : r) v = rng.uniform(-1e3, 1e3);
        MinMaxScaler s;
        s.fit(rows);
        for (auto& r : rows) {
            auto back = s.inverse_transform(s.transform(r));
            for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(back[c], r[c], 1e-9);
        }
    }
}

TEST(Mask, AllOnesAllZerosCheckerboardAndIdempotence) {
    GrayImage img = GrayImage::filled(6, 4, 77);
    EXPECT_EQ(apply_mask(img, GrayImage::filled(6, 4, 1)), img);
    EXPECT_EQ(apply_mask(img, GrayImage::filled(6, 4, 0)), GrayImage::filled(6, 4, 0));
    GrayImage checker = GrayImage::filled(6, 4);
    for (std::size_t y = 0; y < 4; ++y)
        for (std::size_t x = 0; x < 6; ++x) checker.at(x, y) = (x + y) % 2 ? 255 : 0;
    auto once = apply_mask(img, checker);
    EXPECT_EQ(std::count(once.data.begin(), once.data.end(), 0), 12);
    EXPECT_EQ(apply_mask(once, checker), once);
}

TEST(Resize, SmallConstantUpsample) {
    EXPECT_EQ(resize_bilinear(GrayImage::filled(2, 2, 5), 4, 4), GrayImage::filled(4, 4, 5));
}

TEST(Scaler, ColumnExampleAndConstantColumn) {
    MinMaxScaler s;
    s.fit({{10, 5}, {20, 5}, {30, 5}});
    EXPECT_EQ(s.transform({10, 5}), (std::vector<double>{0, 0.5}));
    EXPECT_EQ(s.transform({20, 5}), (std::vector<double>{0.5, 0.5}));
    EXPECT_EQ(s.transform({30, 5}), (std::vector<double>{1, 0.5}));
}
