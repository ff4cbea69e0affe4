#pragma once

// Random grad_check instances: one generator per primitive plus three
// composite graphs. Every instance is a scalar function of a single point;
// other operands are captured as untracked constants.

#include <functional>
#include <string>
#include <vector>

#include "mirage/common.hpp"
#include "mirage/optim.hpp"
#include "mirage/tape.hpp"

namespace mirage::testing {

using ad::Attrs;
using ad::Primitive;
using ad::Shape;
using ad::Tape;
using ad::Tensor;

struct GradCase {
    ad::ScalarFunction function;
    Tensor<double> point;
};

inline Tensor<double> random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(ad::numel_of(shape));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return Tensor<double>(std::move(shape), std::move(v));
}

inline std::size_t dim_in(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.index(hi - lo + 1); }

// sum(W * y) with W fixed per instance, so every output coordinate matters.
inline ad::ScalarFunction weighted(std::function<Tensor<double>(Tape<double>&, const Tensor<double>&)> body,
                                   const Tensor<double>& probe, std::uint64_t weight_seed) {
    Tape<double> dry;
    const Shape out_shape = body(dry, probe).shape();
    Rng rng(weight_seed);
    const Tensor<double> w = random_tensor(rng, out_shape);
    return [body, w](Tape<double>& tape, const Tensor<double>& x) { return tape.sum(tape.mul(body(tape, x), w)); };
}

inline GradCase binary_case(Rng& rng, const Tensor<double>& a, const Tensor<double>& b,
                            std::function<Tensor<double>(Tape<double>&, const Tensor<double>&, const Tensor<double>&)> op) {
    const bool wrt_first = rng.bernoulli(0.5);
    const Tensor<double> point = wrt_first ? a : b;
    auto body = wrt_first ? std::function<Tensor<double>(Tape<double>&, const Tensor<double>&)>(
                                [a, b, op](Tape<double>& t, const Tensor<double>& x) { return op(t, x, b); })
                          : [a, b, op](Tape<double>& t, const Tensor<double>& x) { return op(t, a, x); };
    return {weighted(body, point, rng.bits()), point};
}

inline GradCase unary_case(Rng& rng, const Tensor<double>& x,
                           std::function<Tensor<double>(Tape<double>&, const Tensor<double>&)> op) {
    return {weighted(op, x, rng.bits()), x};
}

inline GradCase primitive_case(Primitive p, Rng& rng) {
    const std::size_t m = dim_in(rng, 1, 5), n = dim_in(rng, 1, 5), k = dim_in(rng, 1, 5);
    switch (p) {
        case Primitive::MatMul: {
            const bool ta = rng.bernoulli(0.5), tb = rng.bernoulli(0.5);
            const auto a = random_tensor(rng, ta ? Shape{k, m} : Shape{m, k});
            const auto b = random_tensor(rng, tb ? Shape{n, k} : Shape{k, n});
            return binary_case(rng, a, b, [ta, tb](Tape<double>& t, const Tensor<double>& x, const Tensor<double>& y) {
                return t.matmul(x, y, ta, tb);
            });
        }
        case Primitive::Add:
        case Primitive::Mul: {
            const auto a = random_tensor(rng, {m, n});
            const auto b = random_tensor(rng, rng.bernoulli(0.5) ? Shape{m, n} : Shape{1, n});
            if (p == Primitive::Add)
                return binary_case(rng, a, b, [](Tape<double>& t, const Tensor<double>& x, const Tensor<double>& y) { return t.add(x, y); });
            return binary_case(rng, a, b, [](Tape<double>& t, const Tensor<double>& x, const Tensor<double>& y) { return t.mul(x, y); });
        }
        case Primitive::Scale: {
            const double s = rng.uniform(-3, 3);
            return unary_case(rng, random_tensor(rng, {m, n}), [s](Tape<double>& t, const Tensor<double>& x) { return t.scale(x, s); });
        }
        case Primitive::Concat: {
            const int axis = rng.bernoulli(0.5) ? 0 : 1;
            const std::size_t parts = dim_in(rng, 2, 3), which = rng.index(parts);
            std::vector<Tensor<double>> fixed;
            for (std::size_t i = 0; i < parts; ++i) {
                const std::size_t len = dim_in(rng, 1, 4);
                fixed.push_back(random_tensor(rng, axis == 0 ? Shape{len, n} : Shape{m, len}));
            }
            return unary_case(rng, fixed[which], [fixed, which, axis](Tape<double>& t, const Tensor<double>& x) {
                auto all = fixed;
                all[which] = x;
                return t.concat(std::span<const Tensor<double>>(all), axis);
            });
        }
        case Primitive::Slice: {
            const int axis = rng.bernoulli(0.5) ? 0 : 1;
            const auto x = random_tensor(rng, {m + 1, n + 1});
            const std::size_t len = axis == 0 ? m + 1 : n + 1;
            const std::size_t begin = rng.index(len), end = begin + 1 + rng.index(len - begin);
            return unary_case(rng, x, [axis, begin, end](Tape<double>& t, const Tensor<double>& v) { return t.slice(v, axis, begin, end); });
        }
        case Primitive::GatherRows: {
            std::vector<std::size_t> idx(dim_in(rng, 1, 7));
            for (auto& i : idx) i = rng.index(m);  // repeats exercise accumulation
            return unary_case(rng, random_tensor(rng, {m, n}),
                              [idx](Tape<double>& t, const Tensor<double>& v) { return t.gather_rows(v, idx); });
        }
        case Primitive::Transpose:
            return unary_case(rng, random_tensor(rng, {m, n}), [](Tape<double>& t, const Tensor<double>& v) { return t.transpose(v); });
        case Primitive::Exp:
            return unary_case(rng, random_tensor(rng, {m, n}, -2, 2), [](Tape<double>& t, const Tensor<double>& v) { return t.exp(v); });
        case Primitive::Log:
            return unary_case(rng, random_tensor(rng, {m, n}, 0.5, 3), [](Tape<double>& t, const Tensor<double>& v) { return t.log(v); });
        case Primitive::Sum:
        case Primitive::Mean: {
            const int mode = static_cast<int>(rng.index(3));  // all, axis 0, axis 1
            const bool mean = p == Primitive::Mean;
            return unary_case(rng, random_tensor(rng, {m, n}), [mode, mean](Tape<double>& t, const Tensor<double>& v) {
                if (mode == 2) return mean ? t.mean(v) : t.sum(v);
                return mean ? t.mean(v, mode) : t.sum(v, mode);
            });
        }
        case Primitive::Softmax: {
            const int axis = rng.bernoulli(0.5) ? 0 : 1;
            return unary_case(rng, random_tensor(rng, {m, n + 1}, -3, 3),
                              [axis](Tape<double>& t, const Tensor<double>& v) { return t.softmax(v, axis); });
        }
        case Primitive::LogSoftmax: {
            const int axis = rng.bernoulli(0.5) ? 0 : 1;
            std::vector<std::uint8_t> mask;
            if (rng.bernoulli(0.5)) {
                mask.resize(m * (n + 1));
                for (auto& b : mask) b = rng.bernoulli(0.7) ? 1 : 0;
            }
            return unary_case(rng, random_tensor(rng, {m, n + 1}, -3, 3), [axis, mask](Tape<double>& t, const Tensor<double>& v) {
                return t.log_softmax(v, axis, mask);
            });
        }
        case Primitive::LayerNorm:
            return unary_case(rng, random_tensor(rng, {m, n + 2}), [](Tape<double>& t, const Tensor<double>& v) { return t.layer_norm(v); });
        case Primitive::Gelu:
            return unary_case(rng, random_tensor(rng, {m, n}, -3, 3), [](Tape<double>& t, const Tensor<double>& v) { return t.gelu(v); });
        case Primitive::L2Normalize:
            return unary_case(rng, random_tensor(rng, {m, n + 1}, 0.2, 1.0),
                              [](Tape<double>& t, const Tensor<double>& v) { return t.l2_normalize(v); });
        case Primitive::CosineSimilarity: {
            const auto a = random_tensor(rng, {m, n + 1}, 0.2, 1.0);
            const auto b = random_tensor(rng, {m, n + 1}, -1.0, 1.0);
            return binary_case(rng, a, b, [](Tape<double>& t, const Tensor<double>& x, const Tensor<double>& y) {
                return t.cosine_similarity(x, y);
            });
        }
        case Primitive::Attention: {
            const std::size_t heads = dim_in(rng, 1, 2), head_dim = dim_in(rng, 1, 3);
            const std::size_t seq = dim_in(rng, 1, 4), sequences = dim_in(rng, 1, 2);
            const bool causal = rng.bernoulli(0.5);
            return unary_case(rng, random_tensor(rng, {sequences * seq, 3 * heads * head_dim}),
                              [seq, heads, causal](Tape<double>& t, const Tensor<double>& v) {
                                  return t.attention(v, seq, heads, causal);
                              });
        }
    }
    throw std::logic_error("no generator for primitive");
}

inline const std::vector<std::string>& composite_names() {
    static const std::vector<std::string> names = {"mlp3", "softmax_ce", "layernorm_block"};
    return names;
}

// Random 3-layer composite, softmax cross-entropy, and a pre-norm residual block.
inline GradCase composite_case(std::size_t which, Rng& rng) {
    const std::size_t rows = dim_in(rng, 2, 4), width = dim_in(rng, 2, 5), hidden = dim_in(rng, 2, 6);
    switch (which) {
        case 0: {
            const auto w1 = random_tensor(rng, {width, hidden}), b1 = random_tensor(rng, {1, hidden});
            const auto w2 = random_tensor(rng, {hidden, hidden}), b2 = random_tensor(rng, {1, hidden});
            const auto w3 = random_tensor(rng, {hidden, 1});
            return {[=](Tape<double>& t, const Tensor<double>& x) {
                        auto h = t.gelu(t.add(t.matmul(x, w1), b1));
                        h = t.exp(t.scale(t.add(t.matmul(h, w2), b2), 0.3));
                        return t.mean(t.matmul(h, w3));
                    },
                    random_tensor(rng, {rows, width})};
        }
        case 1: {
            const std::size_t classes = dim_in(rng, 2, 4);
            std::vector<double> onehot(rows * classes, 0.0);
            for (std::size_t r = 0; r < rows; ++r) onehot[r * classes + rng.index(classes)] = 1.0;
            const Tensor<double> target({rows, classes}, onehot);
            const auto w = random_tensor(rng, {width, classes});
            return {[=](Tape<double>& t, const Tensor<double>& x) {
                        const auto logits = t.matmul(t.l2_normalize(x), w);
                        return t.scale(t.mean(t.sum(t.mul(t.log_softmax(logits, 1), target), 1)), -1.0);
                    },
                    random_tensor(rng, {rows, width})};
        }
        default: {
            const std::size_t heads = 1 + rng.index(2), d = heads * dim_in(rng, 1, 2);
            const auto gain = random_tensor(rng, {1, d}, 0.5, 1.5), bias = random_tensor(rng, {1, d});
            const auto wqkv = random_tensor(rng, {d, 3 * d}, -0.7, 0.7), wout = random_tensor(rng, {d, d}, -0.7, 0.7);
            return {[=](Tape<double>& t, const Tensor<double>& x) {
                        const auto n = t.add(t.mul(t.layer_norm(x), gain), bias);
                        const auto a = t.matmul(t.attention(t.matmul(n, wqkv), rows, heads, true), wout);
                        const auto y = t.add(x, a);
                        return t.sum(t.mul(t.gelu(t.layer_norm(y)), y));
                    },
                    random_tensor(rng, {rows, d})};
        }
    }
}

}  // namespace mirage::testing
