#include "mirage/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mirage::kernels {
namespace {

// Row update crow += av * brow. Elementwise, so vector width never changes
// the result; the AVX2 clone is bit-identical to the baseline one.
template <typename T>
__attribute__((target_clones("avx2", "default"))) void axpy_row(T* __restrict crow, const T* __restrict brow, T av,
                                                                std::size_t n) {
    for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
}

template <typename T>
std::vector<T> transposed(const T* src, std::size_t rows, std::size_t cols) {
    std::vector<T> out(rows * cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = src[r * cols + c];
    return out;
}

// One (sequence, head) block of attention. Shared by both variants so the
// parallel path differs only in how blocks are scheduled.
template <typename T>
void attention_block_forward(const AttentionDims& d, std::size_t s, std::size_t h, const T* qkv, T* out, T* probs) {
    const std::size_t width = d.width();
    const std::size_t stride = 3 * width;
    const std::size_t len = d.seq_len;
    const T scale = T(1) / std::sqrt(static_cast<T>(d.head_dim));
    const T* q = qkv + s * len * stride + h * d.head_dim;
    const T* k = q + width;
    const T* v = q + 2 * width;
    T* p = probs + (s * d.heads + h) * len * len;
    for (std::size_t t = 0; t < len; ++t) {
        const std::size_t visible = d.causal ? t + 1 : len;
        T* prow = p + t * len;
        T mx = -INFINITY;
        for (std::size_t u = 0; u < visible; ++u) {
            T acc = 0;
            for (std::size_t x = 0; x < d.head_dim; ++x) acc += q[t * stride + x] * k[u * stride + x];
            prow[u] = acc * scale;
            mx = std::max(mx, prow[u]);
        }
        T total = 0;
        for (std::size_t u = 0; u < visible; ++u) {
            prow[u] = std::exp(prow[u] - mx);
            total += prow[u];
        }
        for (std::size_t u = 0; u < visible; ++u) prow[u] /= total;
        for (std::size_t u = visible; u < len; ++u) prow[u] = 0;

        T* orow = out + (s * len + t) * width + h * d.head_dim;
        for (std::size_t x = 0; x < d.head_dim; ++x) orow[x] = 0;
        for (std::size_t u = 0; u < visible; ++u) {
            const T w = prow[u];
            for (std::size_t x = 0; x < d.head_dim; ++x) orow[x] += w * v[u * stride + x];
        }
    }
}

template <typename T>
void attention_block_backward(const AttentionDims& d, std::size_t s, std::size_t h, const T* qkv, const T* probs,
                              const T* dout, T* dqkv) {
    const std::size_t width = d.width();
    const std::size_t stride = 3 * width;
    const std::size_t len = d.seq_len;
    const T scale = T(1) / std::sqrt(static_cast<T>(d.head_dim));
    const std::size_t base = s * len * stride + h * d.head_dim;
    const T* q = qkv + base;
    const T* k = q + width;
    const T* v = q + 2 * width;
    T* dq = dqkv + base;
    T* dk = dq + width;
    T* dv = dq + 2 * width;
    const T* p = probs + (s * d.heads + h) * len * len;
    const T* dO = dout + s * len * width + h * d.head_dim;

    std::vector<T> dscore(len);
    for (std::size_t t = 0; t < len; ++t) {
        const std::size_t visible = d.causal ? t + 1 : len;
        const T* prow = p + t * len;
        T weighted = 0;
        for (std::size_t u = 0; u < visible; ++u) {
            T dp = 0;
            for (std::size_t x = 0; x < d.head_dim; ++x) dp += dO[t * width + x] * v[u * stride + x];
            dscore[u] = dp;
            weighted += prow[u] * dp;
        }
        for (std::size_t u = 0; u < visible; ++u) {
            const T ds = prow[u] * (dscore[u] - weighted) * scale;
            for (std::size_t x = 0; x < d.head_dim; ++x) {
                dq[t * stride + x] += ds * k[u * stride + x];
                dk[u * stride + x] += ds * q[t * stride + x];
                dv[u * stride + x] += prow[u] * dO[t * width + x];
            }
        }
    }
}

}  // namespace

namespace serial {

template <typename T>
void gemm(std::size_t m, std::size_t n, std::size_t k, const T* a, bool trans_a, const T* b, bool trans_b, T* c,
          bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            T acc = accumulate ? c[i * n + j] : T(0);
            for (std::size_t p = 0; p < k; ++p) {
                const T av = trans_a ? a[p * m + i] : a[i * k + p];
                const T bv = trans_b ? b[j * k + p] : b[p * n + j];
                acc += av * bv;
            }
            c[i * n + j] = acc;
        }
    }
}

template <typename T>
void attention_forward(const AttentionDims& dims, const T* qkv, T* out, T* probs) {
    for (std::size_t s = 0; s < dims.sequences; ++s)
        for (std::size_t h = 0; h < dims.heads; ++h) attention_block_forward(dims, s, h, qkv, out, probs);
}

template <typename T>
void attention_backward(const AttentionDims& dims, const T* qkv, const T* probs, const T* dout, T* dqkv) {
    for (std::size_t s = 0; s < dims.sequences; ++s)
        for (std::size_t h = 0; h < dims.heads; ++h) attention_block_backward(dims, s, h, qkv, probs, dout, dqkv);
}

}  // namespace serial

namespace parallel {

template <typename T>
void gemm(std::size_t m, std::size_t n, std::size_t k, const T* a, bool trans_a, const T* b, bool trans_b, T* c,
          bool accumulate) {
    std::vector<T> a_packed;
    std::vector<T> b_packed;
    if (trans_a) {
        a_packed = transposed(a, k, m);
        a = a_packed.data();
    }
    if (trans_b) {
        b_packed = transposed(b, n, k);
        b = b_packed.data();
    }
    const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * n * k > 32768)
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
        T* __restrict crow = c + i * n;
        if (!accumulate) std::fill(crow, crow + n, T(0));
        const T* arow = a + i * k;
        for (std::size_t p = 0; p < k; ++p) axpy_row(crow, b + p * n, arow[p], n);
    }
}

template <typename T>
void attention_forward(const AttentionDims& dims, const T* qkv, T* out, T* probs) {
    const auto blocks = static_cast<std::ptrdiff_t>(dims.sequences * dims.heads);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t b = 0; b < blocks; ++b)
        attention_block_forward(dims, b / dims.heads, b % dims.heads, qkv, out, probs);
}

template <typename T>
void attention_backward(const AttentionDims& dims, const T* qkv, const T* probs, const T* dout, T* dqkv) {
    const auto blocks = static_cast<std::ptrdiff_t>(dims.sequences * dims.heads);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t b = 0; b < blocks; ++b)
        attention_block_backward(dims, b / dims.heads, b % dims.heads, qkv, probs, dout, dqkv);
}

}  // namespace parallel

int configure_threads_from_env() {
#ifdef _OPENMP
    if (const char* env = std::getenv("MIRAGE_THREADS")) {
        const int cap = std::atoi(env);
        if (cap > 0) omp_set_num_threads(std::min(cap, omp_get_num_procs()));
    }
    return omp_get_max_threads();
#else
    return 1;
#endif
}

#define MIRAGE_INSTANTIATE_KERNELS(T)                                                                          \
    template void serial::gemm<T>(std::size_t, std::size_t, std::size_t, const T*, bool, const T*, bool, T*,  \
                                  bool);                                                                       \
    template void parallel::gemm<T>(std::size_t, std::size_t, std::size_t, const T*, bool, const T*, bool, T*, \
                                    bool);                                                                     \
    template void serial::attention_forward<T>(const AttentionDims&, const T*, T*, T*);                        \
    template void parallel::attention_forward<T>(const AttentionDims&, const T*, T*, T*);                      \
    template void serial::attention_backward<T>(const AttentionDims&, const T*, const T*, const T*, T*);       \
    template void parallel::attention_backward<T>(const AttentionDims&, const T*, const T*, const T*, T*);

MIRAGE_INSTANTIATE_KERNELS(float)
MIRAGE_INSTANTIATE_KERNELS(double)

}  // namespace mirage::kernels
