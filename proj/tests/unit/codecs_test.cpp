#include <gtest/gtest.h>

#include <filesystem>

#include "duckmorph/codecs.hpp"
#include "duckmorph/errors.hpp"
#include "duckmorph/rng.hpp"

using namespace duckmorph;
using namespace duckmorph::codecs;

namespace {

const char* kPly =
    "ply\n"
    "format ascii 1.0\n"
    "element vertex 2\n"
    "property float x\n"
    "property float y\n"
    "property float z\n"
    "property uchar red\n"
    "property uchar green\n"
    "property uchar blue\n"
    "end_header\n"
    "1 2 3 10 20 30\n"
    "-4.5 0 1e2 0 0 255\n";

} // namespace

TEST(Ply, ParsesPointsAndColors) {
    auto c = parse_ply(kPly);
    ASSERT_EQ(c.size(), 2u);
    EXPECT_EQ(c.points[1].x, -4.5);
    EXPECT_EQ(c.points[1].z, 100.0);
    EXPECT_EQ(c.colors[0], (Rgb{10, 20, 30}));
}

TEST(Ply, UnitScaleConvertsMeters) {
    auto c = parse_ply("ply\nformat ascii 1.0\nelement vertex 1\nproperty double x\nproperty double y\n"
                       "property double z\nend_header\n0.5 0 0\n",
                       1000.0);
    EXPECT_EQ(c.points[0].x, 500.0);
    EXPECT_FALSE(c.has_colors());
}

TEST(Ply, RoundTripIsStable) {
    Rng rng(1);
    PointCloud c;
    for (int i = 0; i < 200; ++i) {
        c.points.push_back({rng.uniform(-500, 500), rng.uniform(-500, 500), rng.uniform(-500, 500)});
        c.colors.push_back({std::uint8_t(rng.below(256)), std::uint8_t(rng.below(256)), std::uint8_t(rng.below(256))});
    }
    const auto text = format_ply(c);
    auto back = parse_ply(text);
    ASSERT_EQ(back.size(), c.size());
    for (std::size_t i = 0; i < c.size(); ++i) {
        EXPECT_NEAR(back.points[i].x, c.points[i].x, 1e-6);
        EXPECT_EQ(back.colors[i], c.colors[i]);
    }
    EXPECT_EQ(format_ply(back), text);
}

TEST(Ply, ErrorsCarryLineAndOffset) {
    std::string bad = kPly;
    bad.replace(bad.find("-4.5"), 4, "oops");
    try {
        parse_ply(bad);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("line 12"), std::string::npos) << e.what();
        EXPECT_EQ(e.byte_offset(), std::string(kPly).find("-4.5"));
    }
}

TEST(Ply, RejectsUnsupportedHeaders) {
    EXPECT_THROW(parse_ply("ply\nformat binary_little_endian 1.0\nend_header\n"), ParseError);
    EXPECT_THROW(parse_ply("ply\nformat ascii 1.0\nelement vertex 1\nproperty float y\nproperty float x\n"
                           "property float z\nend_header\n0 0 0\n"),
                 ParseError);
    EXPECT_THROW(parse_ply("ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\n"
                           "property float z\nproperty float nx\nend_header\n0 0 0 0\n"),
                 ParseError);
}

TEST(Ply, EveryTruncationIsAParseError) {
    const std::string full = kPly;
    for (std::size_t cut = 0; cut + 1 < full.size(); ++cut) {
        // A cut inside the final number can still be a valid shorter file.
        if (cut >= full.size() - 4) continue;
        EXPECT_THROW(parse_ply(std::string_view(full).substr(0, cut)), ParseError) << "cut at " << cut;
    }
}

TEST(Pnm, RoundTripAllFormats) {
    Rng rng(2);
    imaging::GrayImage g = imaging::GrayImage::filled(5, 3);
    imaging::RgbImage c = imaging::RgbImage::filled(4, 2);
    imaging::DepthImage d = imaging::DepthImage::filled(3, 3);
    for (auto& v : g.data) v = std::uint8_t(rng.below(256));
    for (auto& v : c.data) v = std::uint8_t(rng.below(256));
    for (auto& v : d.data) v = std::uint16_t(rng.below(65536));
    EXPECT_EQ(parse_pgm(format_pgm(g)), g);
    EXPECT_EQ(parse_ppm(format_ppm(c)), c);
    EXPECT_EQ(parse_pgm16(format_pgm16(d)), d);
}

TEST(Pnm, SixteenBitIsBigEndian) {
    imaging::DepthImage d{1, 1, {0x0102}};
    const auto bytes = format_pgm16(d);
    EXPECT_EQ(static_cast<unsigned char>(bytes[bytes.size() - 2]), 0x01);
    EXPECT_EQ(static_cast<unsigned char>(bytes[bytes.size() - 1]), 0x02);
}

TEST(Pnm, TruncationAndKindMismatch) {
    const auto bytes = format_ppm(imaging::RgbImage::filled(4, 4, 9));
    for (std::size_t cut = 0; cut < bytes.size(); ++cut)
        EXPECT_THROW(parse_ppm(std::string_view(bytes).substr(0, cut)), ParseError) << cut;
    EXPECT_THROW(parse_pgm(bytes), ParseError);
    EXPECT_THROW(parse_pgm("P5\n2 2\n70000\n"), ParseError);
}

TEST(Files, AtomicWriteThenRead) {
    const auto dir = std::filesystem::temp_directory_path() / "duckmorph_codec_test";
    std::filesystem::remove_all(dir);
    const auto path = dir / "sub" / "img.pgm";
    save_pgm(path, imaging::GrayImage{1, 1, {42}});
    EXPECT_EQ(load_pgm(path).data[0], 42);
    EXPECT_FALSE(std::filesystem::exists(path.string() + ".tmp"));
    EXPECT_THROW(load_pgm(dir / "missing.pgm"), IoError);
    std::filesystem::remove_all(dir);
}
