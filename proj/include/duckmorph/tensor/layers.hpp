#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "duckmorph/rng.hpp"
#include "duckmorph/tensor/ops.hpp"

namespace duckmorph::tensor {

template <typename T>
struct NamedParameter {
    std::string name;
    BasicTensor<T> tensor;
};

template <typename T>
using ParameterList = std::vector<NamedParameter<T>>;

// Fan-in scaled uniform fill, bound sqrt(6 / fan_in).
template <typename T>
BasicTensor<T> init_uniform(Shape shape, std::size_t fan_in, Rng& rng, double gain = 1.0) {
    const double bound = gain * std::sqrt(6.0 / static_cast<double>(fan_in));
    std::vector<T> v(shape_numel(shape));
    for (auto& e : v) e = static_cast<T>(rng.uniform(-bound, bound));
    return BasicTensor<T>::from_data(std::move(shape), std::move(v), true);
}

template <typename T>
class Linear {
public:
    Linear() = default;
    Linear(std::size_t in, std::size_t out, Rng& rng, double gain = 1.0)
        : weight_(init_uniform<T>({in, out}, in, rng, gain)),
          bias_(BasicTensor<T>::zeros({out}, true)) {}

    BasicTensor<T> operator()(const BasicTensor<T>& x) const { return linear(x, weight_, bias_); }

    std::size_t in_features() const { return weight_.dim(0); }
    std::size_t out_features() const { return weight_.dim(1); }

    BasicTensor<T>& weight() { return weight_; }
    BasicTensor<T>& bias() { return bias_; }

    void collect(const std::string& prefix, ParameterList<T>& out) const {
        out.push_back({prefix + ".weight", weight_});
        out.push_back({prefix + ".bias", bias_});
    }

private:
    BasicTensor<T> weight_;
    BasicTensor<T> bias_;
};

template <typename T>
class LayerNorm {
public:
    LayerNorm() = default;
    explicit LayerNorm(std::size_t dim)
        : gamma_(BasicTensor<T>::full({dim}, T(1), true)), beta_(BasicTensor<T>::zeros({dim}, true)) {}

    BasicTensor<T> operator()(const BasicTensor<T>& x) const {
        return layer_norm_lastdim(x, gamma_, beta_);
    }

    void collect(const std::string& prefix, ParameterList<T>& out) const {
        out.push_back({prefix + ".gamma", gamma_});
        out.push_back({prefix + ".beta", beta_});
    }

private:
    BasicTensor<T> gamma_;
    BasicTensor<T> beta_;
};

template <typename T>
class Conv2d {
public:
    Conv2d() = default;
    Conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, std::size_t stride,
           std::size_t pad, Rng& rng)
        : kernels_(init_uniform<T>({out_ch, in_ch, kernel, kernel}, in_ch * kernel * kernel, rng)),
          bias_(BasicTensor<T>::zeros({out_ch}, true)),
          stride_(stride),
          pad_(pad) {
        if (kernel % 2 == 0) throw ConfigError("conv kernel size must be odd");
    }

    BasicTensor<T> operator()(const BasicTensor<T>& x) const {
        return conv2d(x, kernels_, bias_, stride_, pad_);
    }

    BasicTensor<T>& kernels() { return kernels_; }

    void collect(const std::string& prefix, ParameterList<T>& out) const {
        out.push_back({prefix + ".kernels", kernels_});
        out.push_back({prefix + ".bias", bias_});
    }

private:
    BasicTensor<T> kernels_;
    BasicTensor<T> bias_;
    std::size_t stride_ = 1;
    std::size_t pad_ = 0;
};

// Scaled dot-product self-attention over a [L x d] sequence.
template <typename T>
class MultiHeadAttention {
public:
    MultiHeadAttention() = default;
    MultiHeadAttention(std::size_t dim, std::size_t heads, Rng& rng) : heads_(heads) {
        if (heads == 0 || dim % heads != 0) {
            throw ConfigError("attention width " + std::to_string(dim) +
                              " is not divisible by " + std::to_string(heads) + " heads");
        }
        query_ = Linear<T>(dim, dim, rng, 0.5);
        key_ = Linear<T>(dim, dim, rng, 0.5);
        value_ = Linear<T>(dim, dim, rng, 0.5);
        output_ = Linear<T>(dim, dim, rng, 0.5);
    }

    // When `weights` is non-null it receives the [L x L] attention matrix of
    // every head.
    BasicTensor<T> operator()(const BasicTensor<T>& x,
                              std::vector<BasicTensor<T>>* weights = nullptr) const {
        detail::require_rank(x, 2, "attention");
        const std::size_t dim = query_.in_features();
        detail::require(x.dim(1) == dim, "attention: input " + shape_str(x.shape()) +
                                             " does not match width " + std::to_string(dim));
        const std::size_t head_dim = dim / heads_;
        const T inv_scale = T(1) / std::sqrt(static_cast<T>(head_dim));
        auto q = query_(x);
        auto k = key_(x);
        auto v = value_(x);
        std::vector<BasicTensor<T>> heads_out;
        heads_out.reserve(heads_);
        for (std::size_t h = 0; h < heads_; ++h) {
            auto qh = slice_cols(q, h * head_dim, head_dim);
            auto kh = slice_cols(k, h * head_dim, head_dim);
            auto vh = slice_cols(v, h * head_dim, head_dim);
            auto attn = softmax_lastdim(scale(matmul(qh, transpose(kh)), inv_scale));
            if (weights) weights->push_back(attn);
            heads_out.push_back(matmul(attn, vh));
        }
        auto merged = heads_ == 1 ? heads_out[0] : concat_cols(heads_out);
        return output_(merged);
    }

    std::size_t heads() const { return heads_; }

    void collect(const std::string& prefix, ParameterList<T>& out) const {
        query_.collect(prefix + ".query", out);
        key_.collect(prefix + ".key", out);
        value_.collect(prefix + ".value", out);
        output_.collect(prefix + ".output", out);
    }

private:
    std::size_t heads_ = 1;
    Linear<T> query_, key_, value_, output_;
};

// Post-norm transformer encoder layer:
//   x <- LN(x + MHSA(x));  x <- LN(x + FFN(x))
template <typename T>
class EncoderLayer {
public:
    EncoderLayer() = default;
    EncoderLayer(std::size_t dim, std::size_t heads, std::size_t ffn_mult, Rng& rng)
        : attention_(dim, heads, rng),
          norm1_(dim),
          ffn_in_(dim, dim * ffn_mult, rng),
          ffn_out_(dim * ffn_mult, dim, rng, 0.5),
          norm2_(dim) {}

    BasicTensor<T> operator()(const BasicTensor<T>& x) const {
        auto h = norm1_(add(x, attention_(x)));
        return norm2_(add(h, ffn_out_(relu(ffn_in_(h)))));
    }

    MultiHeadAttention<T>& attention() { return attention_; }

    void collect(const std::string& prefix, ParameterList<T>& out) const {
        attention_.collect(prefix + ".attn", out);
        norm1_.collect(prefix + ".norm1", out);
        ffn_in_.collect(prefix + ".ffn_in", out);
        ffn_out_.collect(prefix + ".ffn_out", out);
        norm2_.collect(prefix + ".norm2", out);
    }

private:
    MultiHeadAttention<T> attention_;
    LayerNorm<T> norm1_;
    Linear<T> ffn_in_;
    Linear<T> ffn_out_;
    LayerNorm<T> norm2_;
};

} // namespace duckmorph::tensor
