#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "duckmorph/tensor/kernels.hpp"
#include "duckmorph/tensor/tensor.hpp"

namespace duckmorph::tensor {

namespace detail {

inline void require(bool ok, const std::string& msg) {
    if (!ok) throw DimensionError(msg);
}

template <typename T>
void require_rank(const BasicTensor<T>& t, std::size_t r, const char* op) {
    require(t.rank() == r, std::string(op) + ": expected rank " + std::to_string(r) +
                               " tensor, got " + shape_str(t.shape()));
}

template <typename T>
void add_into(T* dst, const T* src, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dst[i] += src[i];
}

} // namespace detail

// y[N x Dout] = x[N x Din] * w[Din x Dout] + b[Dout]
template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b) {
    detail::require_rank(x, 2, "linear");
    detail::require_rank(w, 2, "linear");
    const std::size_t n = x.dim(0), din = x.dim(1), dout = w.dim(1);
    detail::require(w.dim(0) == din, "linear: input " + shape_str(x.shape()) +
                                         " does not match weight " + shape_str(w.shape()));
    detail::require(b.numel() == dout, "linear: bias " + shape_str(b.shape()) +
                                           " does not match weight " + shape_str(w.shape()));
    std::vector<T> y(n * dout);
    const T* bd = b.data().data();
    for (std::size_t i = 0; i < n; ++i) std::copy(bd, bd + dout, y.data() + i * dout);
    kernels::gemm_nn(n, din, dout, x.data().data(), w.data().data(), y.data());
    return BasicTensor<T>::make_result(
        {n, dout}, std::move(y), {x, w, b},
        [n, din, dout](tensor::detail::Node<T>& self) {
            auto& xn = *self.parents[0];
            auto& wn = *self.parents[1];
            auto& bn = *self.parents[2];
            const T* gy = self.grad.data();
            if (T* gx = grad_of(xn)) kernels::gemm_nt(n, dout, din, gy, wn.data.data(), gx);
            if (T* gw = grad_of(wn)) kernels::gemm_tn(n, din, dout, xn.data.data(), gy, gw);
            if (T* gb = grad_of(bn)) {
                for (std::size_t i = 0; i < n; ++i) detail::add_into(gb, gy + i * dout, dout);
            }
        },
        "linear");
}

// c[N x M] = a[N x K] * b[K x M]
template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    detail::require_rank(a, 2, "matmul");
    detail::require_rank(b, 2, "matmul");
    const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
    detail::require(b.dim(0) == k, "matmul: inner dimensions differ, " + shape_str(a.shape()) +
                                       " vs " + shape_str(b.shape()));
    std::vector<T> c(n * m, T(0));
    kernels::gemm_nn(n, k, m, a.data().data(), b.data().data(), c.data());
    return BasicTensor<T>::make_result(
        {n, m}, std::move(c), {a, b},
        [n, k, m](tensor::detail::Node<T>& self) {
            auto& an = *self.parents[0];
            auto& bn = *self.parents[1];
            const T* gc = self.grad.data();
            if (T* ga = grad_of(an)) kernels::gemm_nt(n, m, k, gc, bn.data.data(), ga);
            if (T* gb = grad_of(bn)) kernels::gemm_tn(n, k, m, an.data.data(), gc, gb);
        },
        "matmul");
}

template <typename T>
BasicTensor<T> transpose(const BasicTensor<T>& a) {
    detail::require_rank(a, 2, "transpose");
    const std::size_t r = a.dim(0), c = a.dim(1);
    std::vector<T> out(r * c);
    kernels::transpose(r, c, a.data().data(), out.data());
    return BasicTensor<T>::make_result(
        {c, r}, std::move(out), {a},
        [r, c](tensor::detail::Node<T>& self) {
            if (T* ga = grad_of(*self.parents[0])) {
                std::vector<T> tmp(r * c);
                kernels::transpose(c, r, self.grad.data(), tmp.data());
                detail::add_into(ga, tmp.data(), r * c);
            }
        },
        "transpose");
}

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& a, Shape shape) {
    detail::require(shape_numel(shape) == a.numel(), "reshape: cannot view " +
                                                         shape_str(a.shape()) + " as " +
                                                         shape_str(shape));
    std::vector<T> v(a.data().begin(), a.data().end());
    const std::size_t n = a.numel();
    return BasicTensor<T>::make_result(
        std::move(shape), std::move(v), {a},
        [n](tensor::detail::Node<T>& self) {
            if (T* ga = grad_of(*self.parents[0])) detail::add_into(ga, self.grad.data(), n);
        },
        "reshape");
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    detail::require(a.shape() == b.shape(), "add: shape mismatch " + shape_str(a.shape()) +
                                                " vs " + shape_str(b.shape()));
    const std::size_t n = a.numel();
    std::vector<T> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = a.data()[i] + b.data()[i];
    return BasicTensor<T>::make_result(
        a.shape(), std::move(v), {a, b},
        [n](tensor::detail::Node<T>& self) {
            for (int p = 0; p < 2; ++p) {
                if (T* g = grad_of(*self.parents[p])) detail::add_into(g, self.grad.data(), n);
            }
        },
        "add");
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, T s) {
    const std::size_t n = a.numel();
    std::vector<T> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = a.data()[i] * s;
    return BasicTensor<T>::make_result(
        a.shape(), std::move(v), {a},
        [n, s](tensor::detail::Node<T>& self) {
            if (T* g = grad_of(*self.parents[0])) {
                for (std::size_t i = 0; i < n; ++i) g[i] += s * self.grad[i];
            }
        },
        "scale");
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& a) {
    const std::size_t n = a.numel();
    std::vector<T> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = a.data()[i] > T(0) ? a.data()[i] : T(0);
    return BasicTensor<T>::make_result(
        a.shape(), std::move(v), {a},
        [n](tensor::detail::Node<T>& self) {
            if (T* g = grad_of(*self.parents[0])) {
                const T* x = self.parents[0]->data.data();
                for (std::size_t i = 0; i < n; ++i)
                    if (x[i] > T(0)) g[i] += self.grad[i];
            }
        },
        "relu");
}

// Softmax over the last dimension, max-subtracted.
template <typename T>
BasicTensor<T> softmax_lastdim(const BasicTensor<T>& a) {
    const std::size_t d = a.shape().back();
    const std::size_t rows = a.numel() / d;
    std::vector<T> v(a.numel());
    for (std::size_t r = 0; r < rows; ++r) {
        const T* x = a.data().data() + r * d;
        T* y = v.data() + r * d;
        const T mx = *std::max_element(x, x + d);
        T sum = 0;
        for (std::size_t j = 0; j < d; ++j) {
            y[j] = std::exp(x[j] - mx);
            sum += y[j];
        }
        for (std::size_t j = 0; j < d; ++j) y[j] /= sum;
    }
    return BasicTensor<T>::make_result(
        a.shape(), std::move(v), {a},
        [rows, d](tensor::detail::Node<T>& self) {
            T* g = grad_of(*self.parents[0]);
            if (!g) return;
            for (std::size_t r = 0; r < rows; ++r) {
                const T* y = self.data.data() + r * d;
                const T* gy = self.grad.data() + r * d;
                T dot = 0;
                for (std::size_t j = 0; j < d; ++j) dot += y[j] * gy[j];
                for (std::size_t j = 0; j < d; ++j) g[r * d + j] += y[j] * (gy[j] - dot);
            }
        },
        "softmax");
}

inline constexpr double kLayerNormEps = 1e-5;

// Normalizes each row over the last dimension, then applies gamma/beta.
template <typename T>
BasicTensor<T> layer_norm_lastdim(const BasicTensor<T>& a, const BasicTensor<T>& gamma,
                                  const BasicTensor<T>& beta, T eps = T(kLayerNormEps)) {
    const std::size_t d = a.shape().back();
    detail::require(gamma.numel() == d && beta.numel() == d,
                    "layer_norm: scale/shift must have " + std::to_string(d) + " entries");
    const std::size_t rows = a.numel() / d;
    std::vector<T> v(a.numel());
    // xhat and 1/sigma per row are kept for the backward pass
    auto xhat = std::make_shared<std::vector<T>>(a.numel());
    auto inv_std = std::make_shared<std::vector<T>>(rows);
    const T* gm = gamma.data().data();
    const T* bt = beta.data().data();
    for (std::size_t r = 0; r < rows; ++r) {
        const T* x = a.data().data() + r * d;
        T mean = 0;
        for (std::size_t j = 0; j < d; ++j) mean += x[j];
        mean /= T(d);
        T var = 0;
        for (std::size_t j = 0; j < d; ++j) var += (x[j] - mean) * (x[j] - mean);
        var /= T(d);
        const T is = T(1) / std::sqrt(var + eps);
        (*inv_std)[r] = is;
        for (std::size_t j = 0; j < d; ++j) {
            const T h = (x[j] - mean) * is;
            (*xhat)[r * d + j] = h;
            v[r * d + j] = h * gm[j] + bt[j];
        }
    }
    return BasicTensor<T>::make_result(
        a.shape(), std::move(v), {a, gamma, beta},
        [rows, d, xhat, inv_std](tensor::detail::Node<T>& self) {
            T* gx = grad_of(*self.parents[0]);
            T* gg = grad_of(*self.parents[1]);
            T* gb = grad_of(*self.parents[2]);
            const T* gm = self.parents[1]->data.data();
            std::vector<T> gh(d);
            for (std::size_t r = 0; r < rows; ++r) {
                const T* gy = self.grad.data() + r * d;
                const T* h = xhat->data() + r * d;
                T mean_gh = 0, mean_ghh = 0;
                for (std::size_t j = 0; j < d; ++j) {
                    if (gg) gg[j] += gy[j] * h[j];
                    if (gb) gb[j] += gy[j];
                    gh[j] = gy[j] * gm[j];
                    mean_gh += gh[j];
                    mean_ghh += gh[j] * h[j];
                }
                if (!gx) continue;
                mean_gh /= T(d);
                mean_ghh /= T(d);
                const T is = (*inv_std)[r];
                for (std::size_t j = 0; j < d; ++j)
                    gx[r * d + j] += is * (gh[j] - mean_gh - h[j] * mean_ghh);
            }
        },
        "layer_norm");
}

inline std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t stride,
                                   std::size_t pad) {
    const long long span = static_cast<long long>(in) + 2LL * static_cast<long long>(pad) -
                           static_cast<long long>(k);
    if (span < 0 || stride == 0) return 0;
    return static_cast<std::size_t>(span) / stride + 1;
}

// Cross-correlation. x[Cin x H x W], kernels[Cout x Cin x k x k], bias[Cout]
// (bias may be undefined).
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& kernels_t,
                      const BasicTensor<T>& bias, std::size_t stride, std::size_t pad) {
    detail::require_rank(x, 3, "conv2d");
    detail::require_rank(kernels_t, 4, "conv2d");
    const std::size_t cin = x.dim(0), h = x.dim(1), w = x.dim(2);
    const std::size_t cout = kernels_t.dim(0), k = kernels_t.dim(2);
    detail::require(kernels_t.dim(1) == cin, "conv2d: input " + shape_str(x.shape()) +
                                                 " does not match kernels " +
                                                 shape_str(kernels_t.shape()));
    if (kernels_t.dim(3) != k || k % 2 == 0) {
        throw ConfigError("conv2d: kernels must be square with odd size, got " +
                          shape_str(kernels_t.shape()));
    }
    const std::size_t ho = conv_out_extent(h, k, stride, pad);
    const std::size_t wo = conv_out_extent(w, k, stride, pad);
    if (ho < 1 || wo < 1) {
        throw ConfigError("conv2d: output would be empty for input " + shape_str(x.shape()) +
                          ", kernel " + std::to_string(k) + ", stride " +
                          std::to_string(stride) + ", padding " + std::to_string(pad));
    }
    const bool has_bias = bias.defined();
    if (has_bias) detail::require(bias.numel() == cout, "conv2d: bias size mismatch");
    const std::size_t patch = cin * k * k, npos = ho * wo;

    auto im2col = [=](const T* src, T* cols) {
        for (std::size_t c = 0; c < cin; ++c)
            for (std::size_t ki = 0; ki < k; ++ki)
                for (std::size_t kj = 0; kj < k; ++kj) {
                    T* row = cols + ((c * k + ki) * k + kj) * npos;
                    for (std::size_t oy = 0; oy < ho; ++oy) {
                        const long long iy = static_cast<long long>(oy * stride + ki) -
                                             static_cast<long long>(pad);
                        for (std::size_t ox = 0; ox < wo; ++ox) {
                            const long long ix = static_cast<long long>(ox * stride + kj) -
                                                 static_cast<long long>(pad);
                            const bool inside = iy >= 0 && ix >= 0 &&
                                                iy < static_cast<long long>(h) &&
                                                ix < static_cast<long long>(w);
                            row[oy * wo + ox] = inside ? src[(c * h + iy) * w + ix] : T(0);
                        }
                    }
                }
    };

    std::vector<T> cols(patch * npos);
    im2col(x.data().data(), cols.data());
    std::vector<T> out(cout * npos, T(0));
    if (has_bias) {
        for (std::size_t o = 0; o < cout; ++o)
            std::fill(out.begin() + o * npos, out.begin() + (o + 1) * npos, bias.data()[o]);
    }
    kernels::gemm_nn(cout, patch, npos, kernels_t.data().data(), cols.data(), out.data());

    std::vector<BasicTensor<T>> parents{x, kernels_t};
    if (has_bias) parents.push_back(bias);
    return BasicTensor<T>::make_result(
        {cout, ho, wo}, std::move(out), parents,
        [=](tensor::detail::Node<T>& self) {
            auto& xn = *self.parents[0];
            auto& kn = *self.parents[1];
            const T* gy = self.grad.data();
            T* gk = grad_of(kn);
            T* gx = grad_of(xn);
            if (has_bias) {
                if (T* gb = grad_of(*self.parents[2])) {
                    for (std::size_t o = 0; o < cout; ++o) {
                        T s = 0;
                        for (std::size_t p = 0; p < npos; ++p) s += gy[o * npos + p];
                        gb[o] += s;
                    }
                }
            }
            if (gk) {
                std::vector<T> cols_local(patch * npos);
                im2col(xn.data.data(), cols_local.data());
                kernels::gemm_nt(cout, npos, patch, gy, cols_local.data(), gk);
            }
            if (gx) {
                std::vector<T> gcols(patch * npos, T(0));
                kernels::gemm_tn(cout, patch, npos, kn.data.data(), gy, gcols.data());
                for (std::size_t c = 0; c < cin; ++c)
                    for (std::size_t ki = 0; ki < k; ++ki)
                        for (std::size_t kj = 0; kj < k; ++kj) {
                            const T* row = gcols.data() + ((c * k + ki) * k + kj) * npos;
                            for (std::size_t oy = 0; oy < ho; ++oy) {
                                const long long iy = static_cast<long long>(oy * stride + ki) -
                                                     static_cast<long long>(pad);
                                if (iy < 0 || iy >= static_cast<long long>(h)) continue;
                                for (std::size_t ox = 0; ox < wo; ++ox) {
                                    const long long ix =
                                        static_cast<long long>(ox * stride + kj) -
                                        static_cast<long long>(pad);
                                    if (ix < 0 || ix >= static_cast<long long>(w)) continue;
                                    gx[(c * h + iy) * w + ix] += row[oy * wo + ox];
                                }
                            }
                        }
            }
        },
        "conv2d");
}

// Concatenates rank-2 tensors along rows (all must share the column count).
template <typename T>
BasicTensor<T> concat_rows(const std::vector<BasicTensor<T>>& parts) {
    detail::require(!parts.empty(), "concat_rows: nothing to concatenate");
    const std::size_t cols = parts[0].dim(1);
    std::size_t rows = 0;
    for (const auto& p : parts) {
        detail::require_rank(p, 2, "concat_rows");
        detail::require(p.dim(1) == cols, "concat_rows: column mismatch " +
                                              shape_str(parts[0].shape()) + " vs " +
                                              shape_str(p.shape()));
        rows += p.dim(0);
    }
    std::vector<T> v;
    v.reserve(rows * cols);
    for (const auto& p : parts) v.insert(v.end(), p.data().begin(), p.data().end());
    return BasicTensor<T>::make_result(
        {rows, cols}, std::move(v), parts,
        [](tensor::detail::Node<T>& self) {
            std::size_t off = 0;
            for (auto& p : self.parents) {
                const std::size_t n = p->data.size();
                if (T* g = grad_of(*p)) detail::add_into(g, self.grad.data() + off, n);
                off += n;
            }
        },
        "concat_rows");
}

// Concatenates rank-2 tensors along columns (all must share the row count).
template <typename T>
BasicTensor<T> concat_cols(const std::vector<BasicTensor<T>>& parts) {
    detail::require(!parts.empty(), "concat_cols: nothing to concatenate");
    const std::size_t rows = parts[0].dim(0);
    std::vector<std::size_t> widths;
    std::size_t cols = 0;
    for (const auto& p : parts) {
        detail::require_rank(p, 2, "concat_cols");
        detail::require(p.dim(0) == rows, "concat_cols: row mismatch " +
                                              shape_str(parts[0].shape()) + " vs " +
                                              shape_str(p.shape()));
        widths.push_back(p.dim(1));
        cols += p.dim(1);
    }
    std::vector<T> v(rows * cols);
    std::size_t off = 0;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        const T* src = parts[i].data().data();
        for (std::size_t r = 0; r < rows; ++r)
            std::copy(src + r * widths[i], src + (r + 1) * widths[i], v.data() + r * cols + off);
        off += widths[i];
    }
    return BasicTensor<T>::make_result(
        {rows, cols}, std::move(v), parts,
        [rows, cols, widths](tensor::detail::Node<T>& self) {
            std::size_t off = 0;
            for (std::size_t i = 0; i < widths.size(); ++i) {
                if (T* g = grad_of(*self.parents[i])) {
                    for (std::size_t r = 0; r < rows; ++r)
                        detail::add_into(g + r * widths[i], self.grad.data() + r * cols + off,
                                         widths[i]);
                }
                off += widths[i];
            }
        },
        "concat_cols");
}

// Columns [start, start + width) of a rank-2 tensor.
template <typename T>
BasicTensor<T> slice_cols(const BasicTensor<T>& a, std::size_t start, std::size_t width) {
    detail::require_rank(a, 2, "slice_cols");
    const std::size_t rows = a.dim(0), cols = a.dim(1);
    detail::require(width > 0 && start + width <= cols, "slice_cols: range out of bounds");
    std::vector<T> v(rows * width);
    for (std::size_t r = 0; r < rows; ++r)
        std::copy(a.data().data() + r * cols + start, a.data().data() + r * cols + start + width,
                  v.data() + r * width);
    return BasicTensor<T>::make_result(
        {rows, width}, std::move(v), {a},
        [rows, cols, start, width](tensor::detail::Node<T>& self) {
            if (T* g = grad_of(*self.parents[0])) {
                for (std::size_t r = 0; r < rows; ++r)
                    detail::add_into(g + r * cols + start, self.grad.data() + r * width, width);
            }
        },
        "slice_cols");
}

// Rows of `a` picked by index (repeats allowed); gradients scatter-add back.
template <typename T>
BasicTensor<T> gather_rows(const BasicTensor<T>& a, std::span<const std::size_t> index) {
    detail::require_rank(a, 2, "gather_rows");
    const std::size_t rows = a.dim(0), cols = a.dim(1);
    std::vector<T> v(index.size() * cols);
    for (std::size_t i = 0; i < index.size(); ++i) {
        detail::require(index[i] < rows, "gather_rows: index out of range");
        std::copy(a.data().data() + index[i] * cols, a.data().data() + (index[i] + 1) * cols,
                  v.data() + i * cols);
    }
    std::vector<std::size_t> idx(index.begin(), index.end());
    return BasicTensor<T>::make_result(
        {index.size(), cols}, std::move(v), {a},
        [cols, idx = std::move(idx)](tensor::detail::Node<T>& self) {
            if (T* g = grad_of(*self.parents[0])) {
                for (std::size_t i = 0; i < idx.size(); ++i)
                    detail::add_into(g + idx[i] * cols, self.grad.data() + i * cols, cols);
            }
        },
        "gather_rows");
}

// Input rows form `groups` consecutive blocks of `group_size`; returns the
// column-wise max of each block. Ties route the gradient to the first max.
template <typename T>
BasicTensor<T> max_pool_groups(const BasicTensor<T>& a, std::size_t groups,
                               std::size_t group_size) {
    detail::require_rank(a, 2, "max_pool_groups");
    detail::require(groups * group_size == a.dim(0), "max_pool_groups: " +
                                                         std::to_string(groups) + " groups of " +
                                                         std::to_string(group_size) +
                                                         " rows do not tile " +
                                                         shape_str(a.shape()));
    const std::size_t cols = a.dim(1);
    std::vector<T> v(groups * cols);
    std::vector<std::size_t> arg(groups * cols);
    const T* x = a.data().data();
    for (std::size_t g = 0; g < groups; ++g) {
        T* out = v.data() + g * cols;
        std::size_t* am = arg.data() + g * cols;
        const std::size_t r0 = g * group_size;
        std::copy(x + r0 * cols, x + (r0 + 1) * cols, out);
        std::fill(am, am + cols, r0);
        for (std::size_t r = r0 + 1; r < r0 + group_size; ++r) {
            const T* row = x + r * cols;
            for (std::size_t c = 0; c < cols; ++c) {
                if (row[c] > out[c]) {
                    out[c] = row[c];
                    am[c] = r;
                }
            }
        }
    }
    return BasicTensor<T>::make_result(
        {groups, cols}, std::move(v), {a},
        [cols, arg = std::move(arg)](tensor::detail::Node<T>& self) {
            if (T* g = grad_of(*self.parents[0])) {
                for (std::size_t i = 0; i < arg.size(); ++i) g[arg[i] * cols + i % cols] += self.grad[i];
            }
        },
        "max_pool_groups");
}

// Column means of a rank-2 tensor, shape [1 x cols].
template <typename T>
BasicTensor<T> mean_rows(const BasicTensor<T>& a) {
    detail::require_rank(a, 2, "mean_rows");
    const std::size_t rows = a.dim(0), cols = a.dim(1);
    std::vector<T> v(cols, T(0));
    for (std::size_t r = 0; r < rows; ++r) detail::add_into(v.data(), a.data().data() + r * cols, cols);
    for (auto& e : v) e /= T(rows);
    return BasicTensor<T>::make_result(
        {1, cols}, std::move(v), {a},
        [rows, cols](tensor::detail::Node<T>& self) {
            if (T* g = grad_of(*self.parents[0])) {
                const T inv = T(1) / T(rows);
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += self.grad[c] * inv;
            }
        },
        "mean_rows");
}

// Repeats a vector on `rows` rows: [n] or [1 x n] -> [rows x n].
template <typename T>
BasicTensor<T> repeat_rows(const BasicTensor<T>& a, std::size_t rows) {
    const std::size_t cols = a.numel();
    detail::require(a.rank() == 1 || (a.rank() == 2 && a.dim(0) == 1),
                    "repeat_rows: expected a vector, got " + shape_str(a.shape()));
    std::vector<T> v(rows * cols);
    for (std::size_t r = 0; r < rows; ++r) std::copy(a.data().begin(), a.data().end(), v.begin() + r * cols);
    return BasicTensor<T>::make_result(
        {rows, cols}, std::move(v), {a},
        [rows, cols](tensor::detail::Node<T>& self) {
            if (T* g = grad_of(*self.parents[0])) {
                for (std::size_t r = 0; r < rows; ++r) detail::add_into(g, self.grad.data() + r * cols, cols);
            }
        },
        "repeat_rows");
}

// Mean of squared differences over all elements; returns a 1-element tensor.
template <typename T>
BasicTensor<T> mse_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target) {
    detail::require(pred.shape() == target.shape(), "mse_loss: shape mismatch " +
                                                        shape_str(pred.shape()) + " vs " +
                                                        shape_str(target.shape()));
    const std::size_t n = pred.numel();
    T sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const T d = pred.data()[i] - target.data()[i];
        sum += d * d;
    }
    return BasicTensor<T>::make_result(
        {1}, {sum / T(n)}, {pred, target},
        [n](tensor::detail::Node<T>& self) {
            const T* p = self.parents[0]->data.data();
            const T* t = self.parents[1]->data.data();
            const T g0 = self.grad[0] * T(2) / T(n);
            if (T* gp = grad_of(*self.parents[0]))
                for (std::size_t i = 0; i < n; ++i) gp[i] += g0 * (p[i] - t[i]);
            if (T* gt = grad_of(*self.parents[1]))
                for (std::size_t i = 0; i < n; ++i) gt[i] -= g0 * (p[i] - t[i]);
        },
        "mse_loss");
}

// Weighted sum of all elements against a constant weight vector; the usual
// scalar probe for gradient checks.
template <typename T>
BasicTensor<T> dot_const(const BasicTensor<T>& a, std::span<const T> weights) {
    detail::require(weights.size() == a.numel(), "dot_const: weight count mismatch");
    T sum = 0;
    for (std::size_t i = 0; i < a.numel(); ++i) sum += a.data()[i] * weights[i];
    std::vector<T> w(weights.begin(), weights.end());
    return BasicTensor<T>::make_result(
        {1}, {sum}, {a},
        [w = std::move(w)](tensor::detail::Node<T>& self) {
            if (T* g = grad_of(*self.parents[0]))
                for (std::size_t i = 0; i < w.size(); ++i) g[i] += self.grad[0] * w[i];
        },
        "dot_const");
}

} // namespace duckmorph::tensor
