#pragma once

#include <functional>
#include <string>
#include <vector>

#include "duckmorph/fusion.hpp"
#include "duckmorph/tensor/layers.hpp"
#include "support/gradcheck.hpp"

namespace duckmorph::testing {

// Step for the central differences. The checks run in double precision:
// in float32 the rounding noise of a loss evaluation divided by 2h already
// exceeds the 1e-4 tolerance.
inline constexpr double kGradStep = 1e-6;
inline constexpr double kGradTolerance = 1e-4;
inline constexpr int kGradSeeds = 10;

struct GradCase {
    std::string name;
    double tolerance;
    std::function<double(std::uint64_t seed)> max_error;
};

inline std::vector<GradCase> gradient_suite() {
    using namespace tensor;
    std::vector<GradCase> cases;

    cases.push_back({"linear", kGradTolerance, [](std::uint64_t seed) {
                         Rng rng(seed);
                         auto x = random_tensor({3, 4}, rng);
                         auto w = random_tensor({4, 5}, rng);
                         auto b = random_tensor({5}, rng);
                         auto probe = probe_weights(15, rng);
                         return gradient_relative_error({x, w, b}, [&] { return dot_const(linear(x, w, b), std::span<const double>(probe)); },
                                                        kGradStep);
                     }});

    cases.push_back({"relu", kGradTolerance, [](std::uint64_t seed) {
                         Rng rng(seed);
                         auto x = random_away_from_zero({4, 6}, rng);
                         auto probe = probe_weights(24, rng);
                         return gradient_relative_error({x}, [&] { return dot_const(relu(x), std::span<const double>(probe)); }, kGradStep);
                     }});

    cases.push_back({"softmax_lastdim", kGradTolerance, [](std::uint64_t seed) {
                         Rng rng(seed);
                         auto x = random_tensor({3, 7}, rng, -2.0, 2.0);
                         auto probe = probe_weights(21, rng);
                         return gradient_relative_error({x}, [&] { return dot_const(softmax_lastdim(x), std::span<const double>(probe)); },
                                                        kGradStep);
                     }});

    cases.push_back({"layer_norm_lastdim", kGradTolerance, [](std::uint64_t seed) {
                         Rng rng(seed);
                         auto x = random_tensor({4, 6}, rng, -2.0, 2.0);
                         auto g = random_tensor({6}, rng, 0.5, 1.5);
                         auto b = random_tensor({6}, rng);
                         auto probe = probe_weights(24, rng);
                         return gradient_relative_error(
                             {x, g, b}, [&] { return dot_const(layer_norm_lastdim(x, g, b), std::span<const double>(probe)); }, kGradStep);
                     }});

    cases.push_back({"conv2d", kGradTolerance, [](std::uint64_t seed) {
                         Rng rng(seed);
                         auto x = random_tensor({2, 8, 8}, rng);
                         auto k = random_tensor({4, 2, 3, 3}, rng);
                         auto b = random_tensor({4}, rng);
                         const std::size_t stride = seed % 2 == 0 ? 1 : 2;
                         const std::size_t out = conv_out_extent(8, 3, stride, 1);
                         auto probe = probe_weights(4 * out * out, rng);
                         return gradient_relative_error(
                             {x, k, b}, [&] { return dot_const(conv2d(x, k, b, stride, 1), std::span<const double>(probe)); }, kGradStep);
                     }});

    cases.push_back({"multi_head_attention", kGradTolerance, [](std::uint64_t seed) {
                         Rng rng(seed);
                         MultiHeadAttention<double> mha(8, 2, rng);
                         auto x = random_tensor({5, 8}, rng);
                         ParameterList<double> params;
                         mha.collect("mha", params);
                         std::vector<DTensor> leaves{x};
                         for (auto& p : params) leaves.push_back(p.tensor);
                         auto probe = probe_weights(40, rng);
                         return gradient_relative_error(leaves, [&] { return dot_const(mha(x), std::span<const double>(probe)); }, kGradStep);
                     }});

    cases.push_back({"encoder_layer", kGradTolerance, [](std::uint64_t seed) {
                         Rng rng(seed);
                         EncoderLayer<double> layer(8, 2, 4, rng);
                         auto x = random_tensor({5, 8}, rng);
                         ParameterList<double> params;
                         layer.collect("enc", params);
                         std::vector<DTensor> leaves{x};
                         for (auto& p : params) leaves.push_back(p.tensor);
                         auto probe = probe_weights(40, rng);
                         return gradient_relative_error(leaves, [&] { return dot_const(layer(x), std::span<const double>(probe)); }, kGradStep);
                     }});

    cases.push_back({"two_layer_encoder", kGradTolerance, [](std::uint64_t seed) {
                         Rng rng(seed);
                         EncoderLayer<double> first(6, 2, 2, rng), second(6, 2, 2, rng);
                         auto x = random_tensor({4, 6}, rng);
                         ParameterList<double> params;
                         first.collect("enc0", params);
                         second.collect("enc1", params);
                         std::vector<DTensor> leaves{x};
                         for (auto& p : params) leaves.push_back(p.tensor);
                         auto probe = probe_weights(24, rng);
                         return gradient_relative_error(leaves, [&] { return dot_const(second(first(x)), std::span<const double>(probe)); },
                                                        kGradStep);
                     }});

    // Three conv views into tokens, geometric features on every row, an
    // encoder layer, mean pooling and the regression head.
    cases.push_back({"fusion_path", kGradTolerance, [](std::uint64_t seed) {
                         Rng rng(seed);
                         auto img_a = random_tensor({3, 6, 6}, rng, 0.0, 1.0);
                         auto img_b = random_tensor({3, 6, 6}, rng, 0.0, 1.0);
                         auto img_c = random_tensor({1, 6, 6}, rng, 0.0, 1.0);
                         Conv2d<double> ca(3, 4, 3, 2, 1, rng), cb(3, 4, 3, 2, 1, rng), cc(1, 4, 3, 2, 1, rng);
                         auto g = random_tensor({10}, rng, 0.0, 1.0);
                         EncoderLayer<double> enc(14, 2, 2, rng);
                         Linear<double> head(14, 8, rng);
                         ParameterList<double> params;
                         ca.collect("a", params);
                         cb.collect("b", params);
                         cc.collect("c", params);
                         enc.collect("enc", params);
                         head.collect("head", params);
                         std::vector<DTensor> leaves{g};
                         for (auto& p : params) leaves.push_back(p.tensor);
                         auto probe = probe_weights(8, rng);
                         return gradient_relative_error(
                             leaves,
                             [&] {
                                 auto x = fusion::flatten_and_concat(relu(ca(img_a)), relu(cb(img_b)), relu(cc(img_c)));
                                 auto z = enc(fusion::broadcast_and_fuse(x, g));
                                 return dot_const(head(mean_rows(z)), std::span<const double>(probe));
                             },
                             kGradStep);
                     }});

    cases.push_back({"mse_loss", 1e-5, [](std::uint64_t seed) {
                         Rng rng(seed);
                         auto p = random_tensor({4, 3}, rng);
                         auto t = random_tensor({4, 3}, rng);
                         return gradient_relative_error({p, t}, [&] { return mse_loss(p, t); }, kGradStep);
                     }});

    // Structural ops used by the models.
    cases.push_back({"gather_maxpool_concat", kGradTolerance, [](std::uint64_t seed) {
                         Rng rng(seed);
                         auto feats = random_tensor({6, 3}, rng);
                         auto rel = random_tensor({8, 2}, rng);
                         const std::vector<std::size_t> idx{0, 2, 2, 5, 1, 3, 4, 4};
                         auto w = random_tensor({5, 4}, rng);
                         auto b = random_tensor({4}, rng);
                         auto probe = probe_weights(8, rng);
                         return gradient_relative_error({feats, rel, w, b}, [&] {
                             auto grouped = concat_cols<double>({rel, gather_rows(feats, std::span<const std::size_t>(idx))});
                             return dot_const(max_pool_groups(linear(grouped, w, b), 2, 4), std::span<const double>(probe));
                         }, kGradStep);
                     }});

    cases.push_back({"pool_repeat_slice_matmul", kGradTolerance, [](std::uint64_t seed) {
                         Rng rng(seed);
                         auto a = random_tensor({4, 6}, rng);
                         auto b = random_tensor({6, 3}, rng);
                         auto g = random_tensor({2}, rng);
                         auto probe = probe_weights(5, rng);
                         return gradient_relative_error({a, b, g}, [&] {
                             auto m = matmul(transpose(transpose(a)), b);
                             auto seq = concat_rows<double>({m, slice_cols(a, 1, 3)});
                             auto fused = concat_cols<double>({seq, repeat_rows(g, 8)});
                             return dot_const(reshape(mean_rows(fused), {5}), std::span<const double>(probe));
                         }, kGradStep);
                     }});
    return cases;
}

} // namespace duckmorph::testing
