#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "duckmorph/geometry.hpp"
#include "duckmorph/imaging.hpp"

// File codecs. Parsers take the whole file as bytes and report failures as
// ParseError carrying the byte offset of the problem.
namespace duckmorph::codecs {

std::string read_file(const std::filesystem::path& path);
// Writes via a temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

// ASCII PLY: one vertex element with x, y, z (float or double) and optional
// uchar red, green, blue. `unit_scale` multiplies coordinates on load
// (1000 for files in meters).
PointCloud parse_ply(std::string_view bytes, double unit_scale = 1.0);
std::string format_ply(const PointCloud& cloud);
PointCloud load_ply(const std::filesystem::path& path, double unit_scale = 1.0);
void save_ply(const std::filesystem::path& path, const PointCloud& cloud);

// Binary PNM: P5 8-bit, P5 16-bit (big-endian samples), P6 8-bit.
imaging::GrayImage parse_pgm(std::string_view bytes);
imaging::DepthImage parse_pgm16(std::string_view bytes);
imaging::RgbImage parse_ppm(std::string_view bytes);
std::string format_pgm(const imaging::GrayImage& img);
std::string format_pgm16(const imaging::DepthImage& img);
std::string format_ppm(const imaging::RgbImage& img);

imaging::GrayImage load_pgm(const std::filesystem::path& path);
imaging::DepthImage load_pgm16(const std::filesystem::path& path);
imaging::RgbImage load_ppm(const std::filesystem::path& path);
void save_pgm(const std::filesystem::path& path, const imaging::GrayImage& img);
void save_pgm16(const std::filesystem::path& path, const imaging::DepthImage& img);
void save_ppm(const std::filesystem::path& path, const imaging::RgbImage& img);

} // namespace duckmorph::codecs
