#include "mirage/tape.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

#include "mirage/kernels.hpp"

namespace mirage::ad {

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

NodeId next_node_id() {
    static std::atomic<NodeId> counter{1};
    return counter.fetch_add(1, std::memory_order_relaxed);
}

namespace {

constexpr std::array<std::string_view, kPrimitiveCount> kNames = {
    "matmul", "add",     "mul",         "scale",      "concat", "slice",   "gather_rows",
    "transpose", "exp",  "log",         "sum",        "mean",   "softmax", "log_softmax",
    "layer_norm", "gelu", "l2_normalize", "cosine_similarity", "attention"};

[[noreturn]] void shape_fail(Primitive p, const std::string& what) {
    throw ShapeError(std::string(primitive_name(p)) + ": " + what);
}

void require(bool ok, Primitive p, const std::string& what) {
    if (!ok) shape_fail(p, what);
}

template <typename T>
void require_arity(Primitive p, std::span<const Tensor<T>> in, std::size_t n) {
    if (in.size() != n)
        throw std::invalid_argument(std::string(primitive_name(p)) + ": expected " + std::to_string(n) +
                                    " inputs, got " + std::to_string(in.size()));
}

template <typename V>
const V& need(const std::optional<V>& v, Primitive p, const char* name) {
    if (!v) throw std::invalid_argument(std::string(primitive_name(p)) + ": missing attribute '" + name + "'");
    return *v;
}

// Splits a shape around `axis` into (outer, length, inner) extents.
struct AxisSplit {
    std::size_t outer = 1, len = 1, inner = 1, axis = 0;
};

AxisSplit split_axis(const Shape& shape, int axis, Primitive p) {
    const int rank = static_cast<int>(shape.size());
    const int a = axis < 0 ? axis + rank : axis;
    require(a >= 0 && a < rank, p, "axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape));
    AxisSplit s;
    s.axis = static_cast<std::size_t>(a);
    for (int i = 0; i < a; ++i) s.outer *= shape[i];
    s.len = shape[a];
    for (int i = a + 1; i < rank; ++i) s.inner *= shape[i];
    return s;
}

Shape drop_axis(const Shape& shape, std::size_t axis) {
    Shape out;
    for (std::size_t i = 0; i < shape.size(); ++i)
        if (i != axis) out.push_back(shape[i]);
    if (out.empty()) out.push_back(1);
    return out;
}

// Broadcast rule for Add/Mul: identical shapes, or rhs is a single row
// matching the lhs's last dimension.
bool row_broadcast(const Shape& a, const Shape& b, Primitive p) {
    if (a == b) return false;
    const std::size_t last = a.empty() ? 1 : a.back();
    const bool ok = (b.size() == 1 && b[0] == last) || (b.size() == 2 && b[0] == 1 && b[1] == last);
    require(ok && a.size() == 2, p, "cannot broadcast " + shape_str(b) + " onto " + shape_str(a));
    return true;
}

template <typename T>
T gelu_value(T x) {
    return T(0.5) * x * (T(1) + std::erf(x / std::sqrt(T(2))));
}

template <typename T>
T gelu_grad(T x) {
    const T cdf = T(0.5) * (T(1) + std::erf(x / std::sqrt(T(2))));
    const T pdf = std::exp(T(-0.5) * x * x) / std::sqrt(T(2) * T(M_PI));
    return cdf + x * pdf;
}

}  // namespace

std::string_view primitive_name(Primitive p) {
    const auto i = static_cast<int>(p);
    if (i < 0 || i >= kPrimitiveCount) throw UnknownPrimitive("unknown primitive id " + std::to_string(i));
    return kNames[i];
}

Primitive parse_primitive(std::string_view name) {
    for (int i = 0; i < kPrimitiveCount; ++i)
        if (kNames[i] == name) return static_cast<Primitive>(i);
    throw UnknownPrimitive("unknown primitive '" + std::string(name) + "'");
}

template <typename T>
std::span<const T> GradMap<T>::at(const Tensor<T>& t) const {
    auto it = grads_.find(t.id());
    if (it == grads_.end()) throw std::out_of_range("no gradient recorded for tensor " + std::to_string(t.id()));
    return it->second;
}

template <typename T>
std::vector<T>& GradMap<T>::slot(const Tensor<T>& t) {
    auto [it, inserted] = grads_.try_emplace(t.id());
    if (inserted) it->second.assign(t.numel(), T(0));
    return it->second;
}

template <typename T>
std::vector<T>* GradMap<T>::find(NodeId id) {
    auto it = grads_.find(id);
    return it == grads_.end() ? nullptr : &it->second;
}

template <typename T>
Tensor<T> Tape<T>::apply(Primitive kind, std::span<const Tensor<T>> in, const Attrs& attrs) {
    if (consumed_) throw TapeError("tape already consumed by backward()");
    for (const auto& t : in)
        if (!t.defined()) throw std::invalid_argument(std::string(primitive_name(kind)) + ": undefined input");

    Shape out_shape;
    std::vector<T> out;
    std::vector<T> saved;

    switch (kind) {
        case Primitive::MatMul: {
            require_arity(kind, in, 2);
            const auto& a = in[0];
            const auto& b = in[1];
            require(a.rank() == 2 && b.rank() == 2, kind,
                    "operands must be rank 2, got " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
            const std::size_t m = attrs.trans_a ? a.dim(1) : a.dim(0);
            const std::size_t k = attrs.trans_a ? a.dim(0) : a.dim(1);
            const std::size_t kb = attrs.trans_b ? b.dim(1) : b.dim(0);
            const std::size_t n = attrs.trans_b ? b.dim(0) : b.dim(1);
            require(k == kb, kind, "inner dimensions differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
            out_shape = {m, n};
            out.resize(m * n);
            kernels::parallel::gemm(m, n, k, a.data().data(), attrs.trans_a, b.data().data(), attrs.trans_b,
                                    out.data(), false);
            break;
        }
        case Primitive::Add:
        case Primitive::Mul: {
            require_arity(kind, in, 2);
            const auto& a = in[0];
            const auto& b = in[1];
            const bool bc = row_broadcast(a.shape(), b.shape(), kind);
            out_shape = a.shape();
            out.resize(a.numel());
            const std::size_t n = b.numel();
            const auto ad = a.data();
            const auto bd = b.data();
            for (std::size_t i = 0; i < out.size(); ++i) {
                const T bv = bc ? bd[i % n] : bd[i];
                out[i] = kind == Primitive::Add ? ad[i] + bv : ad[i] * bv;
            }
            break;
        }
        case Primitive::Scale: {
            require_arity(kind, in, 1);
            const T s = static_cast<T>(need(attrs.scalar, kind, "scalar"));
            out_shape = in[0].shape();
            out.resize(in[0].numel());
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = s * in[0][i];
            break;
        }
        case Primitive::Concat: {
            require(!in.empty(), kind, "no inputs");
            const int axis = need(attrs.axis, kind, "axis");
            const auto first = split_axis(in[0].shape(), axis, kind);
            std::size_t total = 0;
            for (const auto& t : in) {
                require(t.rank() == in[0].rank(), kind, "rank mismatch " + shape_str(t.shape()));
                for (std::size_t d = 0; d < t.rank(); ++d)
                    require(d == first.axis || t.dim(d) == in[0].dim(d), kind,
                            "dims " + shape_str(t.shape()) + " vs " + shape_str(in[0].shape()) + " off the concat axis");
                total += t.dim(first.axis);
            }
            out_shape = in[0].shape();
            out_shape[first.axis] = total;
            out.resize(numel_of(out_shape));
            std::size_t offset = 0;
            for (const auto& t : in) {
                const std::size_t len = t.dim(first.axis);
                const auto td = t.data();
                for (std::size_t o = 0; o < first.outer; ++o)
                    std::copy_n(td.data() + o * len * first.inner, len * first.inner,
                                out.data() + (o * total + offset) * first.inner);
                offset += len;
            }
            break;
        }
        case Primitive::Slice: {
            require_arity(kind, in, 1);
            const auto s = split_axis(in[0].shape(), need(attrs.axis, kind, "axis"), kind);
            const std::size_t b = need(attrs.begin, kind, "begin");
            const std::size_t e = need(attrs.end, kind, "end");
            require(b <= e && e <= s.len, kind,
                    "range [" + std::to_string(b) + "," + std::to_string(e) + ") outside dim " + std::to_string(s.len));
            out_shape = in[0].shape();
            out_shape[s.axis] = e - b;
            out.resize(numel_of(out_shape));
            const auto d = in[0].data();
            for (std::size_t o = 0; o < s.outer; ++o)
                std::copy_n(d.data() + (o * s.len + b) * s.inner, (e - b) * s.inner,
                            out.data() + o * (e - b) * s.inner);
            break;
        }
        case Primitive::GatherRows: {
            require_arity(kind, in, 1);
            require(in[0].rank() == 2, kind, "input must be rank 2, got " + shape_str(in[0].shape()));
            const std::size_t rows = in[0].dim(0);
            const std::size_t cols = in[0].dim(1);
            out_shape = {attrs.indices.size(), cols};
            out.resize(attrs.indices.size() * cols);
            const auto d = in[0].data();
            for (std::size_t r = 0; r < attrs.indices.size(); ++r) {
                const std::size_t src = attrs.indices[r];
                require(src < rows, kind, "row index " + std::to_string(src) + " >= " + std::to_string(rows));
                std::copy_n(d.data() + src * cols, cols, out.data() + r * cols);
            }
            break;
        }
        case Primitive::Transpose: {
            require_arity(kind, in, 1);
            require(in[0].rank() == 2, kind, "input must be rank 2, got " + shape_str(in[0].shape()));
            const std::size_t r = in[0].dim(0), c = in[0].dim(1);
            out_shape = {c, r};
            out.resize(r * c);
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) out[j * r + i] = in[0].at(i, j);
            break;
        }
        case Primitive::Exp:
        case Primitive::Log:
        case Primitive::Gelu: {
            require_arity(kind, in, 1);
            out_shape = in[0].shape();
            out.resize(in[0].numel());
            const auto d = in[0].data();
            for (std::size_t i = 0; i < out.size(); ++i) {
                if (kind == Primitive::Exp) {
                    out[i] = std::exp(d[i]);
                } else if (kind == Primitive::Log) {
                    if (!(d[i] > T(0))) throw std::domain_error("log: non-positive input " + std::to_string(d[i]));
                    out[i] = std::log(d[i]);
                } else {
                    out[i] = gelu_value(d[i]);
                }
            }
            break;
        }
        case Primitive::Sum:
        case Primitive::Mean: {
            require_arity(kind, in, 1);
            const auto d = in[0].data();
            if (!attrs.axis) {
                T acc = 0;
                for (T v : d) acc += v;
                if (kind == Primitive::Mean) acc /= static_cast<T>(d.size());
                out_shape = {1};
                out = {acc};
            } else {
                const auto s = split_axis(in[0].shape(), *attrs.axis, kind);
                out_shape = drop_axis(in[0].shape(), s.axis);
                out.assign(s.outer * s.inner, T(0));
                for (std::size_t o = 0; o < s.outer; ++o)
                    for (std::size_t l = 0; l < s.len; ++l)
                        for (std::size_t i = 0; i < s.inner; ++i)
                            out[o * s.inner + i] += d[(o * s.len + l) * s.inner + i];
                if (kind == Primitive::Mean)
                    for (auto& v : out) v /= static_cast<T>(s.len);
            }
            break;
        }
        case Primitive::Softmax:
        case Primitive::LogSoftmax: {
            require_arity(kind, in, 1);
            const auto s = split_axis(in[0].shape(), need(attrs.axis, kind, "axis"), kind);
            const bool masked = kind == Primitive::LogSoftmax && !attrs.mask.empty();
            require(!masked || attrs.mask.size() == in[0].numel(), kind,
                    "mask has " + std::to_string(attrs.mask.size()) + " entries for shape " + shape_str(in[0].shape()));
            out_shape = in[0].shape();
            out.assign(in[0].numel(), T(0));
            const auto d = in[0].data();
            for (std::size_t o = 0; o < s.outer; ++o) {
                for (std::size_t i = 0; i < s.inner; ++i) {
                    auto idx = [&](std::size_t l) { return (o * s.len + l) * s.inner + i; };
                    auto on = [&](std::size_t l) { return !masked || attrs.mask[idx(l)] != 0; };
                    T mx = -INFINITY;
                    for (std::size_t l = 0; l < s.len; ++l)
                        if (on(l)) mx = std::max(mx, d[idx(l)]);
                    if (mx == -INFINITY) continue;  // fully masked lane
                    T total = 0;
                    for (std::size_t l = 0; l < s.len; ++l)
                        if (on(l)) total += std::exp(d[idx(l)] - mx);
                    const T lse = mx + std::log(total);
                    for (std::size_t l = 0; l < s.len; ++l) {
                        if (!on(l)) continue;
                        out[idx(l)] = kind == Primitive::Softmax ? std::exp(d[idx(l)] - mx) / total : d[idx(l)] - lse;
                    }
                }
            }
            break;
        }
        case Primitive::LayerNorm: {
            require_arity(kind, in, 1);
            require(in[0].rank() >= 1, kind, "rank-0 input");
            const std::size_t width = in[0].shape().back();
            const std::size_t rows = in[0].numel() / width;
            out_shape = in[0].shape();
            out.resize(in[0].numel());
            saved.resize(rows);  // reciprocal std per row
            const auto d = in[0].data();
            for (std::size_t r = 0; r < rows; ++r) {
                const T* x = d.data() + r * width;
                T mu = 0;
                for (std::size_t c = 0; c < width; ++c) mu += x[c];
                mu /= static_cast<T>(width);
                T var = 0;
                for (std::size_t c = 0; c < width; ++c) var += (x[c] - mu) * (x[c] - mu);
                var /= static_cast<T>(width);
                const T rstd = T(1) / std::sqrt(var + static_cast<T>(attrs.eps));
                saved[r] = rstd;
                for (std::size_t c = 0; c < width; ++c) out[r * width + c] = (x[c] - mu) * rstd;
            }
            break;
        }
        case Primitive::L2Normalize: {
            require_arity(kind, in, 1);
            const std::size_t width = in[0].shape().back();
            const std::size_t rows = in[0].numel() / width;
            out_shape = in[0].shape();
            out.resize(in[0].numel());
            saved.resize(rows);  // norms
            const auto d = in[0].data();
            for (std::size_t r = 0; r < rows; ++r) {
                T sq = 0;
                for (std::size_t c = 0; c < width; ++c) sq += d[r * width + c] * d[r * width + c];
                const T norm = std::sqrt(sq);
                if (!(norm > T(0))) throw std::domain_error("l2_normalize: zero-norm row " + std::to_string(r));
                saved[r] = norm;
                for (std::size_t c = 0; c < width; ++c) out[r * width + c] = d[r * width + c] / norm;
            }
            break;
        }
        case Primitive::CosineSimilarity: {
            require_arity(kind, in, 2);
            require(in[0].shape() == in[1].shape(), kind,
                    "shapes differ: " + shape_str(in[0].shape()) + " vs " + shape_str(in[1].shape()));
            const std::size_t width = in[0].shape().back();
            const std::size_t rows = in[0].numel() / width;
            out_shape = drop_axis(in[0].shape(), in[0].rank() - 1);
            out.resize(rows);
            saved.resize(2 * rows);  // norms of a and b
            const auto a = in[0].data();
            const auto b = in[1].data();
            for (std::size_t r = 0; r < rows; ++r) {
                T dot = 0, na = 0, nb = 0;
                for (std::size_t c = 0; c < width; ++c) {
                    dot += a[r * width + c] * b[r * width + c];
                    na += a[r * width + c] * a[r * width + c];
                    nb += b[r * width + c] * b[r * width + c];
                }
                na = std::sqrt(na);
                nb = std::sqrt(nb);
                if (!(na > T(0) && nb > T(0))) throw std::domain_error("cosine_similarity: zero-norm row");
                saved[2 * r] = na;
                saved[2 * r + 1] = nb;
                out[r] = dot / (na * nb);
            }
            break;
        }
        case Primitive::Attention: {
            require_arity(kind, in, 1);
            const auto& qkv = in[0];
            const std::size_t len = need(attrs.seq_len, kind, "seq_len");
            const std::size_t heads = need(attrs.heads, kind, "heads");
            require(qkv.rank() == 2 && qkv.dim(1) % 3 == 0, kind,
                    "qkv must be [rows, 3*width], got " + shape_str(qkv.shape()));
            const std::size_t width = qkv.dim(1) / 3;
            require(len > 0 && qkv.dim(0) % len == 0, kind,
                    std::to_string(qkv.dim(0)) + " rows not divisible by seq_len " + std::to_string(len));
            require(heads > 0 && width % heads == 0, kind,
                    "width " + std::to_string(width) + " not divisible by " + std::to_string(heads) + " heads");
            kernels::AttentionDims dims{qkv.dim(0) / len, len, heads, width / heads, attrs.causal};
            out_shape = {qkv.dim(0), width};
            out.resize(qkv.dim(0) * width);
            saved.resize(dims.sequences * heads * len * len);
            kernels::parallel::attention_forward(dims, qkv.data().data(), out.data(), saved.data());
            break;
        }
        default:
            throw UnknownPrimitive("unknown primitive id " + std::to_string(static_cast<int>(kind)));
    }

    const bool tracked = std::any_of(in.begin(), in.end(), [](const Tensor<T>& t) { return t.tracked(); });
    Tensor<T> result(std::move(out_shape), std::move(out), tracked);
    if (tracked) {
        entries_.push_back(Entry{kind, std::vector<Tensor<T>>(in.begin(), in.end()), result, attrs, std::move(saved)});
    }
    return result;
}

template <typename T>
GradMap<T> Tape<T>::backward(const Tensor<T>& root) {
    if (consumed_) throw TapeError("backward() invoked twice on the same tape");
    if (!root.defined() || root.numel() != 1)
        throw TapeError("backward() needs a scalar root, got shape " + (root.defined() ? shape_str(root.shape()) : "[]"));
    if (!root.tracked()) throw TapeError("backward() root is not grad-tracked");
    consumed_ = true;

    GradMap<T> grads;
    grads.slot(root)[0] = T(1);

    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
        Entry& e = *it;
        std::vector<T>* gp = grads.find(e.output.id());
        if (!gp) continue;
        const std::vector<T> g = std::move(*gp);
        grads.erase(e.output.id());
        const auto& in = e.inputs;
        const Attrs& at = e.attrs;
        auto want = [&](std::size_t i) { return in[i].tracked(); };

        switch (e.kind) {
            case Primitive::MatMul: {
                const auto& a = in[0];
                const auto& b = in[1];
                const std::size_t m = e.output.dim(0), n = e.output.dim(1);
                const std::size_t k = at.trans_a ? a.dim(0) : a.dim(1);
                if (want(0)) {
                    auto& ga = grads.slot(a);
                    if (!at.trans_a)
                        kernels::parallel::gemm(m, k, n, g.data(), false, b.data().data(), !at.trans_b, ga.data(), true);
                    else
                        kernels::parallel::gemm(k, m, n, b.data().data(), at.trans_b, g.data(), true, ga.data(), true);
                }
                if (want(1)) {
                    auto& gb = grads.slot(b);
                    if (!at.trans_b)
                        kernels::parallel::gemm(k, n, m, a.data().data(), !at.trans_a, g.data(), false, gb.data(), true);
                    else
                        kernels::parallel::gemm(n, k, m, g.data(), true, a.data().data(), at.trans_a, gb.data(), true);
                }
                break;
            }
            case Primitive::Add:
            case Primitive::Mul: {
                const bool mul = e.kind == Primitive::Mul;
                const std::size_t nb = in[1].numel();
                const bool bc = in[0].numel() != nb;
                if (want(0)) {
                    auto& ga = grads.slot(in[0]);
                    for (std::size_t i = 0; i < g.size(); ++i)
                        ga[i] += mul ? g[i] * in[1][bc ? i % nb : i] : g[i];
                }
                if (want(1)) {
                    auto& gb = grads.slot(in[1]);
                    for (std::size_t i = 0; i < g.size(); ++i) gb[bc ? i % nb : i] += mul ? g[i] * in[0][i] : g[i];
                }
                break;
            }
            case Primitive::Scale: {
                const T s = static_cast<T>(*at.scalar);
                auto& ga = grads.slot(in[0]);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
                break;
            }
            case Primitive::Concat: {
                const auto s = split_axis(e.output.shape(), *at.axis, e.kind);
                std::size_t offset = 0;
                for (std::size_t p = 0; p < in.size(); ++p) {
                    const std::size_t len = in[p].dim(s.axis);
                    if (want(p)) {
                        auto& gi = grads.slot(in[p]);
                        for (std::size_t o = 0; o < s.outer; ++o)
                            for (std::size_t j = 0; j < len * s.inner; ++j)
                                gi[o * len * s.inner + j] += g[(o * s.len + offset) * s.inner + j];
                    }
                    offset += len;
                }
                break;
            }
            case Primitive::Slice: {
                const auto s = split_axis(in[0].shape(), *at.axis, e.kind);
                const std::size_t b = *at.begin, len = *at.end - *at.begin;
                auto& gi = grads.slot(in[0]);
                for (std::size_t o = 0; o < s.outer; ++o)
                    for (std::size_t j = 0; j < len * s.inner; ++j)
                        gi[(o * s.len + b) * s.inner + j] += g[o * len * s.inner + j];
                break;
            }
            case Primitive::GatherRows: {
                const std::size_t cols = in[0].dim(1);
                auto& gi = grads.slot(in[0]);
                for (std::size_t r = 0; r < at.indices.size(); ++r)
                    for (std::size_t c = 0; c < cols; ++c) gi[at.indices[r] * cols + c] += g[r * cols + c];
                break;
            }
            case Primitive::Transpose: {
                const std::size_t r = in[0].dim(0), c = in[0].dim(1);
                auto& gi = grads.slot(in[0]);
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j) gi[i * c + j] += g[j * r + i];
                break;
            }
            case Primitive::Exp: {
                auto& gi = grads.slot(in[0]);
                for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i] * e.output[i];
                break;
            }
            case Primitive::Log: {
                auto& gi = grads.slot(in[0]);
                for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i] / in[0][i];
                break;
            }
            case Primitive::Gelu: {
                auto& gi = grads.slot(in[0]);
                for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i] * gelu_grad(in[0][i]);
                break;
            }
            case Primitive::Sum:
            case Primitive::Mean: {
                auto& gi = grads.slot(in[0]);
                if (!at.axis) {
                    const T v = e.kind == Primitive::Mean ? g[0] / static_cast<T>(gi.size()) : g[0];
                    for (auto& x : gi) x += v;
                } else {
                    const auto s = split_axis(in[0].shape(), *at.axis, e.kind);
                    const T f = e.kind == Primitive::Mean ? T(1) / static_cast<T>(s.len) : T(1);
                    for (std::size_t o = 0; o < s.outer; ++o)
                        for (std::size_t l = 0; l < s.len; ++l)
                            for (std::size_t i = 0; i < s.inner; ++i)
                                gi[(o * s.len + l) * s.inner + i] += f * g[o * s.inner + i];
                }
                break;
            }
            case Primitive::Softmax:
            case Primitive::LogSoftmax: {
                const auto s = split_axis(in[0].shape(), *at.axis, e.kind);
                const bool masked = !at.mask.empty();
                auto& gi = grads.slot(in[0]);
                for (std::size_t o = 0; o < s.outer; ++o) {
                    for (std::size_t i = 0; i < s.inner; ++i) {
                        auto idx = [&](std::size_t l) { return (o * s.len + l) * s.inner + i; };
                        auto on = [&](std::size_t l) { return !masked || at.mask[idx(l)] != 0; };
                        if (e.kind == Primitive::Softmax) {
                            T dot = 0;
                            for (std::size_t l = 0; l < s.len; ++l) dot += g[idx(l)] * e.output[idx(l)];
                            for (std::size_t l = 0; l < s.len; ++l)
                                gi[idx(l)] += e.output[idx(l)] * (g[idx(l)] - dot);
                        } else {
                            T total = 0;
                            for (std::size_t l = 0; l < s.len; ++l)
                                if (on(l)) total += g[idx(l)];
                            for (std::size_t l = 0; l < s.len; ++l)
                                if (on(l)) gi[idx(l)] += g[idx(l)] - std::exp(e.output[idx(l)]) * total;
                        }
                    }
                }
                break;
            }
            case Primitive::LayerNorm: {
                const std::size_t width = in[0].shape().back();
                const std::size_t rows = in[0].numel() / width;
                auto& gi = grads.slot(in[0]);
                for (std::size_t r = 0; r < rows; ++r) {
                    const T* y = e.output.data().data() + r * width;
                    const T* gr = g.data() + r * width;
                    T mean_g = 0, mean_gy = 0;
                    for (std::size_t c = 0; c < width; ++c) {
                        mean_g += gr[c];
                        mean_gy += gr[c] * y[c];
                    }
                    mean_g /= static_cast<T>(width);
                    mean_gy /= static_cast<T>(width);
                    for (std::size_t c = 0; c < width; ++c)
                        gi[r * width + c] += e.saved[r] * (gr[c] - mean_g - y[c] * mean_gy);
                }
                break;
            }
            case Primitive::L2Normalize: {
                const std::size_t width = in[0].shape().back();
                const std::size_t rows = in[0].numel() / width;
                auto& gi = grads.slot(in[0]);
                for (std::size_t r = 0; r < rows; ++r) {
                    const T* y = e.output.data().data() + r * width;
                    const T* gr = g.data() + r * width;
                    T dot = 0;
                    for (std::size_t c = 0; c < width; ++c) dot += gr[c] * y[c];
                    for (std::size_t c = 0; c < width; ++c) gi[r * width + c] += (gr[c] - y[c] * dot) / e.saved[r];
                }
                break;
            }
            case Primitive::CosineSimilarity: {
                const std::size_t width = in[0].shape().back();
                const std::size_t rows = in[0].numel() / width;
                for (std::size_t side = 0; side < 2; ++side) {
                    if (!want(side)) continue;
                    const auto& self = in[side];
                    const auto& other = in[1 - side];
                    auto& gs = grads.slot(self);
                    for (std::size_t r = 0; r < rows; ++r) {
                        const T ns = e.saved[2 * r + side], no = e.saved[2 * r + 1 - side];
                        const T c = e.output[r];
                        for (std::size_t j = 0; j < width; ++j) {
                            const std::size_t q = r * width + j;
                            gs[q] += g[r] * (other[q] / (ns * no) - c * self[q] / (ns * ns));
                        }
                    }
                }
                break;
            }
            case Primitive::Attention: {
                const std::size_t len = *at.seq_len, heads = *at.heads;
                const std::size_t width = in[0].dim(1) / 3;
                kernels::AttentionDims dims{in[0].dim(0) / len, len, heads, width / heads, at.causal};
                auto& gi = grads.slot(in[0]);
                kernels::parallel::attention_backward(dims, in[0].data().data(), e.saved.data(), g.data(), gi.data());
                break;
            }
        }
    }
    entries_.clear();
    entries_.shrink_to_fit();
    return grads;
}

template <typename T>
Tensor<T> Tape<T>::matmul(const Tensor<T>& a, const Tensor<T>& b, bool trans_a, bool trans_b) {
    Attrs at;
    at.trans_a = trans_a;
    at.trans_b = trans_b;
    const std::array<Tensor<T>, 2> in{a, b};
    return apply(Primitive::MatMul, in, at);
}

template <typename T>
Tensor<T> Tape<T>::add(const Tensor<T>& a, const Tensor<T>& b) {
    const std::array<Tensor<T>, 2> in{a, b};
    return apply(Primitive::Add, in);
}

template <typename T>
Tensor<T> Tape<T>::mul(const Tensor<T>& a, const Tensor<T>& b) {
    const std::array<Tensor<T>, 2> in{a, b};
    return apply(Primitive::Mul, in);
}

template <typename T>
Tensor<T> Tape<T>::scale(const Tensor<T>& a, double s) {
    Attrs at;
    at.scalar = s;
    return apply(Primitive::Scale, std::span(&a, 1), at);
}

template <typename T>
Tensor<T> Tape<T>::concat(std::span<const Tensor<T>> parts, int axis) {
    Attrs at;
    at.axis = axis;
    return apply(Primitive::Concat, parts, at);
}

template <typename T>
Tensor<T> Tape<T>::concat(std::initializer_list<Tensor<T>> parts, int axis) {
    return concat(std::span<const Tensor<T>>(parts.begin(), parts.size()), axis);
}

template <typename T>
Tensor<T> Tape<T>::slice(const Tensor<T>& a, int axis, std::size_t begin, std::size_t end) {
    Attrs at;
    at.axis = axis;
    at.begin = begin;
    at.end = end;
    return apply(Primitive::Slice, std::span(&a, 1), at);
}

template <typename T>
Tensor<T> Tape<T>::gather_rows(const Tensor<T>& a, std::vector<std::size_t> indices) {
    Attrs at;
    at.indices = std::move(indices);
    return apply(Primitive::GatherRows, std::span(&a, 1), at);
}

template <typename T>
Tensor<T> Tape<T>::transpose(const Tensor<T>& a) {
    return apply(Primitive::Transpose, std::span(&a, 1));
}

template <typename T>
Tensor<T> Tape<T>::exp(const Tensor<T>& a) {
    return apply(Primitive::Exp, std::span(&a, 1));
}

template <typename T>
Tensor<T> Tape<T>::log(const Tensor<T>& a) {
    return apply(Primitive::Log, std::span(&a, 1));
}

template <typename T>
Tensor<T> Tape<T>::sum(const Tensor<T>& a) {
    return apply(Primitive::Sum, std::span(&a, 1));
}

template <typename T>
Tensor<T> Tape<T>::sum(const Tensor<T>& a, int axis) {
    Attrs at;
    at.axis = axis;
    return apply(Primitive::Sum, std::span(&a, 1), at);
}

template <typename T>
Tensor<T> Tape<T>::mean(const Tensor<T>& a) {
    return apply(Primitive::Mean, std::span(&a, 1));
}

template <typename T>
Tensor<T> Tape<T>::mean(const Tensor<T>& a, int axis) {
    Attrs at;
    at.axis = axis;
    return apply(Primitive::Mean, std::span(&a, 1), at);
}

template <typename T>
Tensor<T> Tape<T>::softmax(const Tensor<T>& a, int axis) {
    Attrs at;
    at.axis = axis;
    return apply(Primitive::Softmax, std::span(&a, 1), at);
}

template <typename T>
Tensor<T> Tape<T>::log_softmax(const Tensor<T>& a, int axis, std::vector<std::uint8_t> mask) {
    Attrs at;
    at.axis = axis;
    at.mask = std::move(mask);
    return apply(Primitive::LogSoftmax, std::span(&a, 1), at);
}

template <typename T>
Tensor<T> Tape<T>::layer_norm(const Tensor<T>& a, double eps) {
    Attrs at;
    at.eps = eps;
    return apply(Primitive::LayerNorm, std::span(&a, 1), at);
}

template <typename T>
Tensor<T> Tape<T>::gelu(const Tensor<T>& a) {
    return apply(Primitive::Gelu, std::span(&a, 1));
}

template <typename T>
Tensor<T> Tape<T>::l2_normalize(const Tensor<T>& a) {
    return apply(Primitive::L2Normalize, std::span(&a, 1));
}

template <typename T>
Tensor<T> Tape<T>::cosine_similarity(const Tensor<T>& a, const Tensor<T>& b) {
    const std::array<Tensor<T>, 2> in{a, b};
    return apply(Primitive::CosineSimilarity, in);
}

template <typename T>
Tensor<T> Tape<T>::attention(const Tensor<T>& qkv, std::size_t seq_len, std::size_t heads, bool causal) {
    Attrs at;
    at.seq_len = seq_len;
    at.heads = heads;
    at.causal = causal;
    return apply(Primitive::Attention, std::span(&qkv, 1), at);
}

template class GradMap<float>;
template class GradMap<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace mirage::ad
