#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "mirage/tape.hpp"

namespace mirage::ad {

/// SGD with heavy-ball momentum under a cosine-annealed learning rate.
template <typename T>
struct OptimizerState {
    double base_lr = 0.002;
    double min_lr = 0.0;
    double momentum = 0.9;
    std::size_t step = 0;
    std::size_t total_steps = 1;
    std::vector<std::vector<T>> velocity;  // one buffer per parameter, created on first step
};

/// lr(t) = min_lr + (base_lr - min_lr) * (1 + cos(pi * t / T)) / 2
double cosine_lr(double base_lr, double min_lr, std::size_t t, std::size_t total);

template <typename T>
double current_lr(const OptimizerState<T>& state) {
    return cosine_lr(state.base_lr, state.min_lr, state.step, state.total_steps);
}

/// v <- momentum * v + g;  p <- p - lr(t) * v.  Returns new parameter tensors
/// (tracked leaves) in the same order; advances state.step.
template <typename T>
std::vector<Tensor<T>> sgd_step(std::span<const Tensor<T>> params, const GradMap<T>& grads, OptimizerState<T>& state);

/// Maximum over coordinates of |analytic - numeric| / max(1, |numeric|),
/// numeric derivatives from central differences with the given step.
using ScalarFunction = std::function<Tensor<double>(Tape<double>&, const Tensor<double>&)>;

double grad_check(const ScalarFunction& function, const Tensor<double>& point, double step = 1e-5);

}  // namespace mirage::ad
