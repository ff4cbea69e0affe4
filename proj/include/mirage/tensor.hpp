#pragma once

#include <atomic>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mirage::ad {

using Shape = std::vector<std::size_t>;
using NodeId = std::uint64_t;

inline std::size_t numel_of(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape);

/// Raised when a primitive receives operands whose dimensions do not fit.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

NodeId next_node_id();

/// Immutable n-dimensional array with an optional gradient-tracking flag.
///
/// Copies are cheap and share storage. Gradients never live on the tensor
/// itself; `backward` returns them in a GradMap keyed by node id, so a tensor
/// can take part in several tapes without interference.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    Tensor(Shape shape, std::vector<T> data, bool tracked = false)
        : node_(std::make_shared<Node>(Node{next_node_id(), std::move(shape), std::move(data), tracked})) {
        if (numel_of(node_->shape) != node_->data.size()) {
            throw ShapeError("tensor: shape " + shape_str(node_->shape) + " does not match " +
                             std::to_string(node_->data.size()) + " values");
        }
#ifndef NDEBUG
        for (T v : node_->data) assert(std::isfinite(v));
#endif
    }

    static Tensor zeros(Shape shape, bool tracked = false) {
        const auto n = numel_of(shape);
        return Tensor(std::move(shape), std::vector<T>(n, T{0}), tracked);
    }

    static Tensor scalar(T value, bool tracked = false) { return Tensor({1}, {value}, tracked); }

    bool defined() const { return static_cast<bool>(node_); }
    NodeId id() const { return node_->id; }
    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t numel() const { return node_->data.size(); }
    std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
    bool tracked() const { return node_->tracked; }

    std::span<const T> data() const { return node_->data; }
    const std::vector<T>& values() const { return node_->data; }
    T operator[](std::size_t i) const { return node_->data[i]; }

    /// Row-major 2-D access; rank-1 tensors are treated as a single row.
    std::size_t rows() const { return rank() == 2 ? shape()[0] : 1; }
    std::size_t cols() const { return rank() == 2 ? shape()[1] : (rank() == 1 ? shape()[0] : numel()); }
    T at(std::size_t r, std::size_t c) const { return node_->data[r * cols() + c]; }

    T item() const {
        if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
        return node_->data[0];
    }

    /// Same values under a fresh id that no tape will ever route gradient to.
    Tensor detach() const { return Tensor(shape(), node_->data, false); }

    /// Same values as a new tracked leaf.
    Tensor as_leaf() const { return Tensor(shape(), node_->data, true); }

    template <typename U>
    Tensor<U> cast(bool tracked = false) const {
        return Tensor<U>(shape(), std::vector<U>(node_->data.begin(), node_->data.end()), tracked);
    }

private:
    struct Node {
        NodeId id;
        Shape shape;
        std::vector<T> data;
        bool tracked;
    };
    std::shared_ptr<const Node> node_;
};

}  // namespace mirage::ad
