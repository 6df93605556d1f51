#include "duckmorph/fusion.hpp"

#include <nlohmann/json.hpp>

#include "duckmorph/errors.hpp"

namespace duckmorph::fusion {

BackboneConfig BackboneConfig::small() { return {}; }

BackboneConfig BackboneConfig::medium() {
    BackboneConfig c;
    c.variant = "medium";
    c.widths = {24, 40, 56, 64};
    c.convs_per_stage = 2;
    return c;
}

BackboneConfig BackboneConfig::by_name(const std::string& variant) {
    if (variant == "small") return small();
    if (variant == "medium") return medium();
    throw ConfigError("unknown backbone variant '" + variant + "' (expected small or medium)");
}

std::size_t BackboneConfig::out_extent() const {
    std::size_t e = input_size;
    for (std::size_t i = 0; i < widths.size(); ++i) e = tensor::conv_out_extent(e, 3, 2, 1);
    return e;
}

nlohmann::json BackboneConfig::to_json() const {
    return {{"variant", variant}, {"widths", widths}, {"convs_per_stage", convs_per_stage}, {"input_size", input_size}};
}

BackboneConfig BackboneConfig::from_json(const nlohmann::json& j) {
    BackboneConfig c;
    try {
        c.variant = j.at("variant").get<std::string>();
        c.widths = j.at("widths").get<std::vector<std::size_t>>();
        c.convs_per_stage = j.at("convs_per_stage").get<std::size_t>();
        c.input_size = j.at("input_size").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("backbone config: ") + e.what());
    }
    c.validate();
    return c;
}

void BackboneConfig::validate() const {
    if (widths.empty()) throw ConfigError("backbone needs at least one stage");
    for (auto w : widths)
        if (w == 0) throw ConfigError("backbone stage width must be positive");
    if (convs_per_stage < 1) throw ConfigError("backbone needs at least one conv per stage");
    if (input_size < 1 || out_extent() < 1) throw ConfigError("backbone input too small for its stages");
}

std::size_t FusionConfig::token_width() const {
    return backbone.out_channels() + (use_geometric ? geomfeat::kFeatureCount : 0);
}

nlohmann::json FusionConfig::to_json() const {
    return {{"backbone", backbone.to_json()}, {"encoder_layers", encoder_layers}, {"heads", heads},
            {"ffn_mult", ffn_mult},           {"use_geometric", use_geometric},   {"use_encoder", use_encoder},
            {"seed", seed}};
}

FusionConfig FusionConfig::from_json(const nlohmann::json& j) {
    FusionConfig c;
    try {
        c.backbone = BackboneConfig::from_json(j.at("backbone"));
        c.encoder_layers = j.at("encoder_layers").get<std::size_t>();
        c.heads = j.at("heads").get<std::size_t>();
        c.ffn_mult = j.at("ffn_mult").get<std::size_t>();
        c.use_geometric = j.at("use_geometric").get<bool>();
        c.use_encoder = j.at("use_encoder").get<bool>();
        c.seed = j.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("fusion config: ") + e.what());
    }
    c.validate();
    return c;
}

void FusionConfig::validate() const {
    backbone.validate();
    if (use_encoder) {
        if (heads == 0 || token_width() % heads != 0) {
            throw ConfigError("token width " + std::to_string(token_width()) + " is not divisible by " +
                              std::to_string(heads) + " heads");
        }
        if (ffn_mult < 1) throw ConfigError("ffn_mult must be positive");
    }
}

Backbone::Backbone(const BackboneConfig& cfg, std::size_t in_channels, Rng& rng)
    : cfg_(cfg), in_channels_(in_channels) {
    cfg.validate();
    std::size_t c = in_channels;
    for (auto w : cfg.widths) {
        convs_.emplace_back(c, w, 3, 2, 1, rng);
        for (std::size_t i = 1; i < cfg.convs_per_stage; ++i) convs_.emplace_back(w, w, 3, 1, 1, rng);
        c = w;
    }
}

Tensor Backbone::operator()(const Tensor& image) const {
    if (image.shape() != tensor::Shape{in_channels_, cfg_.input_size, cfg_.input_size}) {
        throw ArgumentError("backbone expects a " + tensor::shape_str({in_channels_, cfg_.input_size, cfg_.input_size}) +
                            " image, got " + tensor::shape_str(image.shape()));
    }
    Tensor x = image;
    for (const auto& conv : convs_) x = tensor::relu(conv(x));
    return x;
}

void Backbone::collect(const std::string& prefix, tensor::ParameterList<float>& out) const {
    for (std::size_t i = 0; i < convs_.size(); ++i) convs_[i].collect(prefix + ".conv" + std::to_string(i), out);
}

FusionModel::FusionModel(FusionConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    Rng rng(cfg_.seed);
    const std::size_t channels[kViews] = {3, 3, 1};
    for (std::size_t v = 0; v < kViews; ++v) backbones_.emplace_back(cfg_.backbone, channels[v], rng);
    const std::size_t d = cfg_.token_width();
    if (cfg_.use_encoder) {
        for (std::size_t i = 0; i < cfg_.encoder_layers; ++i) encoder_.emplace_back(d, cfg_.heads, cfg_.ffn_mult, rng);
    }
    head_ = tensor::Linear<float>(d, kTargets, rng);
}

Tensor FusionModel::tokens(const FusionInput& in) const {
    auto x = flatten_and_concat(backbones_[0](in.top), backbones_[1](in.side), backbones_[2](in.depth));
    if (!cfg_.use_geometric) return x;
    const auto g = Tensor::from_data({geomfeat::kFeatureCount},
                                     std::vector<float>(in.geometric.begin(), in.geometric.end()));
    return broadcast_and_fuse(x, g);
}

Tensor FusionModel::encode(const Tensor& x) const {
    Tensor z = x;
    for (const auto& layer : encoder_) z = layer(z);
    return z;
}

Tensor FusionModel::pool_and_regress(const Tensor& z) const {
    return head_(tensor::mean_rows(z));
}

Tensor FusionModel::forward(const FusionInput& in) const { return pool_and_regress(encode(tokens(in))); }

tensor::ParameterList<float> FusionModel::parameters() const {
    tensor::ParameterList<float> out;
    const char* names[kViews] = {"backbone_top", "backbone_side", "backbone_depth"};
    for (std::size_t v = 0; v < kViews; ++v) backbones_[v].collect(names[v], out);
    for (std::size_t i = 0; i < encoder_.size(); ++i) encoder_[i].collect("encoder" + std::to_string(i), out);
    head_.collect("head", out);
    return out;
}

} // namespace duckmorph::fusion
