#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "oslab/tensor.hpp"

namespace oslab {

/// Multiply the learning rate by `multiplier` from `epoch` onward.
struct DecayPoint {
    std::size_t epoch = 0;
    double multiplier = 1.0;
};

/// SGD with momentum and L2 weight decay.
template <typename T>
struct OptimState {
    double learning_rate = 0.01;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    std::vector<DecayPoint> schedule;
    std::vector<std::vector<T>> velocity;
    double current_lr = 0.01;

    OptimState() = default;
    OptimState(double lr, double mom, double decay, std::vector<DecayPoint> points = {})
        : learning_rate(lr), momentum(mom), weight_decay(decay), schedule(std::move(points)), current_lr(lr) {
        validate();
    }

    void validate() const {
        if (!(learning_rate > 0.0)) throw DomainError("sgd: learning_rate must be positive");
        if (!(momentum >= 0.0 && momentum < 1.0)) throw DomainError("sgd: momentum must be in [0,1)");
        if (!(weight_decay >= 0.0)) throw DomainError("sgd: weight_decay must be non-negative");
        for (const auto& p : schedule)
            if (!(p.multiplier > 0.0)) throw DomainError("sgd: decay multipliers must be positive");
    }

    /// base_lr times every multiplier whose epoch has been reached.
    double learning_rate_at(std::size_t epoch) const {
        double lr = learning_rate;
        for (const auto& p : schedule)
            if (epoch >= p.epoch) lr *= p.multiplier;
        return lr;
    }

    void set_epoch(std::size_t epoch) { current_lr = learning_rate_at(epoch); }
};

/// v <- momentum*v + grad + weight_decay*param; param <- param - lr*v; grads zeroed.
template <typename T>
void sgd_step(std::vector<Tensor<T>>& params, OptimState<T>& state) {
    if (state.velocity.empty()) {
        state.velocity.reserve(params.size());
        for (const auto& p : params) state.velocity.emplace_back(p.numel(), T{0});
    }
    if (state.velocity.size() != params.size()) throw Error("sgd_step: parameter count changed between steps");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].has_grad())
            throw Error("sgd_step: parameter " + std::to_string(i) + " has no gradient");
        if (state.velocity[i].size() != params[i].numel())
            throw ShapeError("sgd_step: velocity buffer does not match parameter " + std::to_string(i));
    }
    const T lr = static_cast<T>(state.current_lr);
    const T mom = static_cast<T>(state.momentum);
    const T decay = static_cast<T>(state.weight_decay);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto w = params[i].data();
        auto g = params[i].grad();
        auto& v = state.velocity[i];
        for (std::size_t j = 0; j < w.size(); ++j) {
            v[j] = mom * v[j] + g[j] + decay * w[j];
            w[j] -= lr * v[j];
        }
        params[i].zero_grad();
    }
}

} // namespace oslab
