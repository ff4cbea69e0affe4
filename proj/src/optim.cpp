#include "mirage/optim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mirage::ad {

double cosine_lr(double base_lr, double min_lr, std::size_t t, std::size_t total) {
    if (total == 0) return base_lr;
    const double frac = std::min(1.0, static_cast<double>(t) / static_cast<double>(total));
    return min_lr + 0.5 * (base_lr - min_lr) * (1.0 + std::cos(M_PI * frac));
}

template <typename T>
std::vector<Tensor<T>> sgd_step(std::span<const Tensor<T>> params, const GradMap<T>& grads, OptimizerState<T>& state) {
    if (state.step >= state.total_steps)
        throw std::logic_error("sgd_step: schedule exhausted (step " + std::to_string(state.step) + " of " +
                               std::to_string(state.total_steps) + ")");
    if (state.velocity.empty()) {
        for (const auto& p : params) state.velocity.emplace_back(p.numel(), T(0));
    }
    if (state.velocity.size() != params.size())
        throw std::invalid_argument("sgd_step: parameter list changed size between steps");

    const T lr = static_cast<T>(current_lr(state));
    const T mu = static_cast<T>(state.momentum);
    std::vector<Tensor<T>> updated;
    updated.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& p = params[i];
        const auto g = grads.at(p);
        auto& v = state.velocity[i];
        if (g.size() != p.numel() || v.size() != p.numel())
            throw ShapeError("sgd_step: gradient/momentum size mismatch for parameter " + std::to_string(i) + " of shape " +
                             shape_str(p.shape()));
        std::vector<T> next(p.data().begin(), p.data().end());
        for (std::size_t j = 0; j < next.size(); ++j) {
            v[j] = mu * v[j] + g[j];
            next[j] -= lr * v[j];
        }
        updated.emplace_back(p.shape(), std::move(next), true);
    }
    ++state.step;
    return updated;
}

double grad_check(const ScalarFunction& function, const Tensor<double>& point, double step) {
    const Tensor<double> leaf = point.as_leaf();
    Tape<double> tape;
    const Tensor<double> out = function(tape, leaf);
    if (!std::isfinite(out.item())) throw std::domain_error("grad_check: non-finite value at the base point");
    std::vector<double> analytic(point.numel(), 0.0);
    if (out.tracked()) {
        const auto grads = tape.backward(out);
        if (grads.contains(leaf)) {
            const auto g = grads.at(leaf);
            std::copy(g.begin(), g.end(), analytic.begin());
        }
    }

    auto eval_at = [&](std::size_t i, double delta) {
        std::vector<double> shifted(point.data().begin(), point.data().end());
        shifted[i] += delta;
        Tape<double> probe;
        const double v = function(probe, Tensor<double>(point.shape(), std::move(shifted))).item();
        if (!std::isfinite(v)) throw std::domain_error("grad_check: non-finite value at a probe point");
        return v;
    };

    double worst = 0.0;
    for (std::size_t i = 0; i < point.numel(); ++i) {
        const double numeric = (eval_at(i, step) - eval_at(i, -step)) / (2.0 * step);
        worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric)));
    }
    return worst;
}

template std::vector<Tensor<float>> sgd_step(std::span<const Tensor<float>>, const GradMap<float>&,
                                             OptimizerState<float>&);
template std::vector<Tensor<double>> sgd_step(std::span<const Tensor<double>>, const GradMap<double>&,
                                              OptimizerState<double>&);

}  // namespace mirage::ad
