#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "duckmorph/errors.hpp"
#include "duckmorph/tensor/tensor.hpp"

namespace duckmorph::imaging {

// Interleaved row-major raster with C channels per pixel.
template <typename T, std::size_t C>
struct Raster {
    static constexpr std::size_t channels = C;
    using value_type = T;

    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<T> data;

    static Raster filled(std::size_t w, std::size_t h, T value = T(0)) {
        return Raster{w, h, std::vector<T>(w * h * C, value)};
    }

    T& at(std::size_t x, std::size_t y, std::size_t c = 0) { return data[(y * width + x) * C + c]; }
    const T& at(std::size_t x, std::size_t y, std::size_t c = 0) const {
        return data[(y * width + x) * C + c];
    }

    friend bool operator==(const Raster&, const Raster&) = default;
};

using GrayImage = Raster<std::uint8_t, 1>;
using RgbImage = Raster<std::uint8_t, 3>;
using DepthImage = Raster<std::uint16_t, 1>; // millimeters, 0 = no return

inline constexpr double kDefaultNear = 400.0;   // mm
inline constexpr double kDefaultFar = 12000.0;  // mm

// Depths outside [near, far] (including 0) become 0; inside they map
// linearly onto 0..255 with rounding.
GrayImage depth_to_gray(const DepthImage& depth, double near = kDefaultNear, double far = kDefaultFar);

// Zeroes every pixel whose mask value is 0.
template <typename T, std::size_t C>
Raster<T, C> apply_mask(const Raster<T, C>& img, const GrayImage& mask) {
    if (img.width != mask.width || img.height != mask.height) {
        throw DimensionError("mask is " + std::to_string(mask.width) + "x" + std::to_string(mask.height) +
                             " but image is " + std::to_string(img.width) + "x" + std::to_string(img.height));
    }
    Raster<T, C> out = img;
    for (std::size_t i = 0; i < mask.data.size(); ++i) {
        if (mask.data[i] == 0) {
            for (std::size_t c = 0; c < C; ++c) out.data[i * C + c] = T(0);
        }
    }
    return out;
}

// Bilinear resampling with corner-aligned sample positions: output pixel j
// samples input coordinate j * (in - 1) / (out - 1).
template <typename T, std::size_t C>
Raster<T, C> resize_bilinear(const Raster<T, C>& img, std::size_t out_h, std::size_t out_w) {
    if (out_h < 1 || out_w < 1) throw ArgumentError("resize target must be at least 1x1");
    if (img.width == 0 || img.height == 0) throw ArgumentError("cannot resize an empty image");
    if (out_h == img.height && out_w == img.width) return img;
    auto out = Raster<T, C>::filled(out_w, out_h);
    const double sy = out_h > 1 ? double(img.height - 1) / double(out_h - 1) : 0.0;
    const double sx = out_w > 1 ? double(img.width - 1) / double(out_w - 1) : 0.0;
    for (std::size_t y = 0; y < out_h; ++y) {
        const double fy = y * sy;
        const std::size_t y0 = static_cast<std::size_t>(fy);
        const std::size_t y1 = y0 + 1 < img.height ? y0 + 1 : y0;
        const double wy = fy - double(y0);
        for (std::size_t x = 0; x < out_w; ++x) {
            const double fx = x * sx;
            const std::size_t x0 = static_cast<std::size_t>(fx);
            const std::size_t x1 = x0 + 1 < img.width ? x0 + 1 : x0;
            const double wx = fx - double(x0);
            for (std::size_t c = 0; c < C; ++c) {
                const double top = (1 - wx) * img.at(x0, y0, c) + wx * img.at(x1, y0, c);
                const double bot = (1 - wx) * img.at(x0, y1, c) + wx * img.at(x1, y1, c);
                out.at(x, y, c) = static_cast<T>(std::lround((1 - wy) * top + wy * bot));
            }
        }
    }
    return out;
}

// 8-bit raster as a [C x H x W] float tensor scaled to [0, 1].
template <std::size_t C>
tensor::Tensor to_tensor(const Raster<std::uint8_t, C>& img) {
    std::vector<float> v(C * img.width * img.height);
    const std::size_t plane = img.width * img.height;
    for (std::size_t i = 0; i < plane; ++i)
        for (std::size_t c = 0; c < C; ++c) v[c * plane + i] = float(img.data[i * C + c]) / 255.0f;
    return tensor::Tensor::from_data({C, img.height, img.width}, std::move(v));
}

// Per-column Min-Max scaling to [0, 1]. Constant columns map to 0.5.
class MinMaxScaler {
public:
    MinMaxScaler() = default;

    // Fits on rows x columns data. A fitted scaler cannot be refit.
    void fit(const std::vector<std::vector<double>>& rows);

    bool fitted() const { return fitted_; }
    std::size_t columns() const { return min_.size(); }
    const std::vector<double>& min() const { return min_; }
    const std::vector<double>& max() const { return max_; }

    std::vector<double> transform(const std::vector<double>& row) const;
    std::vector<double> inverse_transform(const std::vector<double>& row) const;

    nlohmann::json to_json() const;
    static MinMaxScaler from_json(const nlohmann::json& j);

private:
    void require_fitted(std::size_t width) const;

    bool fitted_ = false;
    std::vector<double> min_;
    std::vector<double> max_;
};

} // namespace duckmorph::imaging
