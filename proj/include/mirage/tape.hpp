#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mirage/tensor.hpp"

namespace mirage::ad {

enum class Primitive : std::uint8_t {
    MatMul,            // [m,k] x [k,n]; attrs.trans_a / trans_b
    Add,               // same shape, or rhs [1,n] / [n] broadcast over rows
    Mul,               // elementwise, same broadcast rule as Add
    Scale,             // attrs.scalar * x
    Concat,            // attrs.axis, any number of inputs
    Slice,             // attrs.axis, attrs.begin, attrs.end
    GatherRows,        // attrs.indices into dim 0 of a rank-2 input
    Transpose,         // rank-2
    Exp,
    Log,
    Sum,               // all elements, or along attrs.axis
    Mean,              // all elements, or along attrs.axis
    Softmax,           // attrs.axis
    LogSoftmax,        // attrs.axis; optional attrs.mask excludes entries
    LayerNorm,         // over the last axis, no affine; attrs.eps
    Gelu,              // erf form
    L2Normalize,       // over the last axis
    CosineSimilarity,  // two same-shape inputs, over the last axis
    Attention,         // fused multi-head self-attention core; attrs.seq_len, heads, causal
};

inline constexpr int kPrimitiveCount = static_cast<int>(Primitive::Attention) + 1;

std::string_view primitive_name(Primitive p);

/// Resolves a primitive by name; throws UnknownPrimitive.
Primitive parse_primitive(std::string_view name);

class UnknownPrimitive : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Tape misuse: non-scalar root, untracked root, or a second backward pass.
class TapeError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

struct Attrs {
    std::optional<int> axis;
    std::optional<std::size_t> begin;
    std::optional<std::size_t> end;
    std::optional<double> scalar;
    std::vector<std::size_t> indices;
    std::vector<std::uint8_t> mask;  // LogSoftmax: 1 = participates
    std::optional<std::size_t> seq_len;
    std::optional<std::size_t> heads;
    bool causal = false;
    bool trans_a = false;
    bool trans_b = false;
    double eps = 1e-5;
};

/// Gradients produced by one backward pass, keyed by tensor node id.
template <typename T>
class GradMap {
public:
    bool contains(const Tensor<T>& t) const { return grads_.count(t.id()) != 0; }
    bool contains(NodeId id) const { return grads_.count(id) != 0; }
    std::size_t size() const { return grads_.size(); }

    std::span<const T> at(const Tensor<T>& t) const;
    Tensor<T> tensor(const Tensor<T>& t) const { return Tensor<T>(t.shape(), std::vector<T>(at(t).begin(), at(t).end())); }

    std::vector<T>& slot(const Tensor<T>& t);
    std::vector<T>* find(NodeId id);
    void erase(NodeId id) { grads_.erase(id); }

private:
    std::unordered_map<NodeId, std::vector<T>> grads_;
};

/// Ordered record of primitive applications on grad-tracked values.
///
/// Every primitive is evaluated through a tape. An entry is appended only when
/// at least one input is tracked, so untracked (inference) work leaves the
/// tape empty. Entries are appended in execution order, which is already a
/// topological order; `backward` replays them in reverse exactly once.
template <typename T>
class Tape {
public:
    struct Entry {
        Primitive kind;
        std::vector<Tensor<T>> inputs;
        Tensor<T> output;
        Attrs attrs;
        std::vector<T> saved;  // forward values the backward rule needs
    };

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;
    Tape(Tape&&) = default;
    Tape& operator=(Tape&&) = default;

    Tensor<T> apply(Primitive kind, std::span<const Tensor<T>> inputs, const Attrs& attrs = {});

    GradMap<T> backward(const Tensor<T>& root);

    std::size_t size() const { return entries_.size(); }
    bool consumed() const { return consumed_; }
    const std::vector<Entry>& entries() const { return entries_; }

    // Typed wrappers over apply().
    Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool trans_a = false, bool trans_b = false);
    Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
    Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
    Tensor<T> scale(const Tensor<T>& a, double s);
    Tensor<T> concat(std::span<const Tensor<T>> parts, int axis);
    Tensor<T> concat(std::initializer_list<Tensor<T>> parts, int axis);
    Tensor<T> slice(const Tensor<T>& a, int axis, std::size_t begin, std::size_t end);
    Tensor<T> gather_rows(const Tensor<T>& a, std::vector<std::size_t> indices);
    Tensor<T> transpose(const Tensor<T>& a);
    Tensor<T> exp(const Tensor<T>& a);
    Tensor<T> log(const Tensor<T>& a);
    Tensor<T> sum(const Tensor<T>& a);
    Tensor<T> sum(const Tensor<T>& a, int axis);
    Tensor<T> mean(const Tensor<T>& a);
    Tensor<T> mean(const Tensor<T>& a, int axis);
    Tensor<T> softmax(const Tensor<T>& a, int axis);
    Tensor<T> log_softmax(const Tensor<T>& a, int axis, std::vector<std::uint8_t> mask = {});
    Tensor<T> layer_norm(const Tensor<T>& a, double eps = 1e-5);
    Tensor<T> gelu(const Tensor<T>& a);
    Tensor<T> l2_normalize(const Tensor<T>& a);
    Tensor<T> cosine_similarity(const Tensor<T>& a, const Tensor<T>& b);
    Tensor<T> attention(const Tensor<T>& qkv, std::size_t seq_len, std::size_t heads, bool causal);

private:
    std::vector<Entry> entries_;
    bool consumed_ = false;
};

/// Free-function spelling of Tape::apply.
template <typename T>
Tensor<T> apply_primitive(Tape<T>& tape, Primitive kind, std::span<const Tensor<T>> inputs, const Attrs& attrs = {}) {
    return tape.apply(kind, inputs, attrs);
}

template <typename T>
GradMap<T> backward(Tape<T>& tape, const Tensor<T>& root) {
    return tape.backward(root);
}

}  // namespace mirage::ad
