#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "duckmorph/errors.hpp"
#include "duckmorph/geomfeat.hpp"
#include "duckmorph/tensor/layers.hpp"

// Multimodal regressor: one conv backbone per view, feature maps flattened
// into a token sequence, geometric features appended to every token, a
// transformer encoder, mean pooling and a linear head.
namespace duckmorph::fusion {

using tensor::Tensor;

inline constexpr std::size_t kTargets = 8;
inline constexpr std::size_t kViews = 3; // top RGB, side RGB, side depth

struct BackboneConfig {
    std::string variant = "small";
    std::vector<std::size_t> widths{16, 32, 48, 64}; // one stride-2 stage per entry
    std::size_t convs_per_stage = 1;                 // extra stride-1 convs after the first
    std::size_t input_size = 128;

    static BackboneConfig small();
    static BackboneConfig medium();
    static BackboneConfig by_name(const std::string& variant);

    std::size_t out_channels() const { return widths.back(); }
    std::size_t out_extent() const;
    std::size_t tokens_per_view() const { return out_extent() * out_extent(); }

    nlohmann::json to_json() const;
    static BackboneConfig from_json(const nlohmann::json& j);
    void validate() const;
};

struct FusionConfig {
    BackboneConfig backbone;
    std::size_t encoder_layers = 2;
    std::size_t heads = 2;
    std::size_t ffn_mult = 4;
    bool use_geometric = true;
    bool use_encoder = true;
    std::uint64_t seed = 1;

    std::size_t token_width() const;

    nlohmann::json to_json() const;
    static FusionConfig from_json(const nlohmann::json& j);
    void validate() const;
};

// Model inputs for one sample. Images are [channels x size x size] in
// [0,1]; geometric features are already scaled.
struct FusionInput {
    Tensor top, side, depth;
    std::array<float, geomfeat::kFeatureCount> geometric{};
};

class Backbone {
public:
    Backbone() = default;
    Backbone(const BackboneConfig& cfg, std::size_t in_channels, Rng& rng);

    // [C x H x W] feature map.
    Tensor operator()(const Tensor& image) const;

    std::size_t in_channels() const { return in_channels_; }
    void collect(const std::string& prefix, tensor::ParameterList<float>& out) const;

private:
    BackboneConfig cfg_;
    std::size_t in_channels_ = 0;
    std::vector<tensor::Conv2d<float>> convs_;
};

// Each [C x H x W] map becomes H*W rows of width C in row-major spatial
// order; the views are stacked top, side, depth.
template <typename T>
tensor::BasicTensor<T> flatten_and_concat(const tensor::BasicTensor<T>& top, const tensor::BasicTensor<T>& side,
                                          const tensor::BasicTensor<T>& depth) {
    for (const auto* f : {&top, &side, &depth}) {
        if (f->rank() != 3)
            throw DimensionError("feature map must be [C x H x W], got " + tensor::shape_str(f->shape()));
    }
    if (side.shape() != top.shape() || depth.shape() != top.shape()) {
        throw DimensionError("feature maps differ: " + tensor::shape_str(top.shape()) + ", " +
                             tensor::shape_str(side.shape()) + ", " + tensor::shape_str(depth.shape()));
    }
    const std::size_t c = top.dim(0), n = top.dim(1) * top.dim(2);
    std::vector<tensor::BasicTensor<T>> rows;
    for (const auto* f : {&top, &side, &depth}) rows.push_back(tensor::transpose(tensor::reshape(*f, {c, n})));
    return tensor::concat_rows(rows);
}

// Appends the 10 geometric features to every row.
template <typename T>
tensor::BasicTensor<T> broadcast_and_fuse(const tensor::BasicTensor<T>& x, const tensor::BasicTensor<T>& geometric) {
    if (geometric.numel() != geomfeat::kFeatureCount) {
        throw DimensionError("expected " + std::to_string(geomfeat::kFeatureCount) + " geometric features, got " +
                             std::to_string(geometric.numel()));
    }
    if (x.rank() != 2) throw DimensionError("token sequence must be rank 2, got " + tensor::shape_str(x.shape()));
    const auto g = tensor::reshape(geometric, {1, geomfeat::kFeatureCount});
    return tensor::concat_cols(std::vector<tensor::BasicTensor<T>>{x, tensor::repeat_rows(g, x.dim(0))});
}

class FusionModel {
public:
    explicit FusionModel(FusionConfig cfg = {});

    const FusionConfig& config() const { return cfg_; }
    const Backbone& backbone(std::size_t view) const { return backbones_.at(view); }

    // Token sequence entering the encoder, [L x d].
    Tensor tokens(const FusionInput& in) const;
    Tensor encode(const Tensor& x) const;
    Tensor pool_and_regress(const Tensor& z) const;
    // [1 x 8] in scaled label space.
    Tensor forward(const FusionInput& in) const;

    tensor::ParameterList<float> parameters() const;

private:
    FusionConfig cfg_;
    std::vector<Backbone> backbones_;
    std::vector<tensor::EncoderLayer<float>> encoder_;
    tensor::Linear<float> head_;
};

} // namespace duckmorph::fusion
