#pragma once

#include <cstddef>

// Dense inner loops used by the autodiff primitives.
//
// `serial` holds the textbook reference versions. `parallel` holds the
// OpenMP versions the tape actually calls. Each parallel kernel assigns every
// output element to exactly one thread and keeps the serial reduction order,
// so results are bit-identical to the reference for any thread count.
namespace mirage::kernels {

struct AttentionDims {
    std::size_t sequences = 0;  // independent sequences packed along rows
    std::size_t seq_len = 0;
    std::size_t heads = 0;
    std::size_t head_dim = 0;
    bool causal = false;

    std::size_t width() const { return heads * head_dim; }
};

namespace serial {

/// C = op(A) * op(B) (+ C when accumulate). op(A) is m x k, op(B) is k x n.
template <typename T>
void gemm(std::size_t m, std::size_t n, std::size_t k, const T* a, bool trans_a, const T* b, bool trans_b, T* c,
          bool accumulate);

/// qkv: [sequences*seq_len, 3*width]; out: [sequences*seq_len, width];
/// probs: [sequences, heads, seq_len, seq_len] (saved for backward).
template <typename T>
void attention_forward(const AttentionDims& dims, const T* qkv, T* out, T* probs);

/// Accumulates into dqkv.
template <typename T>
void attention_backward(const AttentionDims& dims, const T* qkv, const T* probs, const T* dout, T* dqkv);

}  // namespace serial

namespace parallel {

template <typename T>
void gemm(std::size_t m, std::size_t n, std::size_t k, const T* a, bool trans_a, const T* b, bool trans_b, T* c,
          bool accumulate);

template <typename T>
void attention_forward(const AttentionDims& dims, const T* qkv, T* out, T* probs);

template <typename T>
void attention_backward(const AttentionDims& dims, const T* qkv, const T* probs, const T* dout, T* dqkv);

}  // namespace parallel

/// Caps OpenMP worker threads from MIRAGE_THREADS when set; returns the cap in effect.
int configure_threads_from_env();

}  // namespace mirage::kernels
