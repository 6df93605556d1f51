#pragma once

#include <cstddef>
#include <vector>

// Dense kernels on raw row-major buffers. Inner loops run along contiguous
// rows of the output so they vectorize without reassociating sums, which
// keeps results bit-reproducible.
namespace duckmorph::tensor::kernels {

// c[n x m] += a[n x k] * b[k x m]
template <typename T>
void gemm_nn(std::size_t n, std::size_t k, std::size_t m, const T* a, const T* b, T* c) {
    constexpr std::size_t kBlock = 128;
    for (std::size_t p0 = 0; p0 < k; p0 += kBlock) {
        const std::size_t p1 = p0 + kBlock < k ? p0 + kBlock : k;
        for (std::size_t i = 0; i < n; ++i) {
            T* __restrict crow = c + i * m;
            const T* arow = a + i * k;
            for (std::size_t p = p0; p < p1; ++p) {
                const T av = arow[p];
                if (av == T(0)) continue;
                const T* __restrict brow = b + p * m;
                for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
            }
        }
    }
}

// c[k x m] += a^T * b, with a[n x k], b[n x m]
template <typename T>
void gemm_tn(std::size_t n, std::size_t k, std::size_t m, const T* a, const T* b, T* c) {
    for (std::size_t p = 0; p < n; ++p) {
        const T* arow = a + p * k;
        const T* __restrict brow = b + p * m;
        for (std::size_t i = 0; i < k; ++i) {
            const T av = arow[i];
            if (av == T(0)) continue;
            T* __restrict crow = c + i * m;
            for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
        }
    }
}

// out[cols x rows] = in[rows x cols]^T
template <typename T>
void transpose(std::size_t rows, std::size_t cols, const T* in, T* out) {
    constexpr std::size_t kTile = 32;
    for (std::size_t r0 = 0; r0 < rows; r0 += kTile) {
        for (std::size_t c0 = 0; c0 < cols; c0 += kTile) {
            const std::size_t r1 = r0 + kTile < rows ? r0 + kTile : rows;
            const std::size_t c1 = c0 + kTile < cols ? c0 + kTile : cols;
            for (std::size_t r = r0; r < r1; ++r)
                for (std::size_t c = c0; c < c1; ++c) out[c * rows + r] = in[r * cols + c];
        }
    }
}

// c[n x m] += a[n x k] * b^T, with b[m x k]
template <typename T>
void gemm_nt(std::size_t n, std::size_t k, std::size_t m, const T* a, const T* b, T* c) {
    std::vector<T> bt(k * m);
    transpose(m, k, b, bt.data());
    gemm_nn(n, k, m, a, bt.data(), c);
}

} // namespace duckmorph::tensor::kernels
