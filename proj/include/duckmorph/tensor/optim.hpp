#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "duckmorph/tensor/layers.hpp"

namespace duckmorph::tensor {

struct AdamConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

template <typename T>
struct OptimizerState {
    AdamConfig config;
    std::vector<std::vector<T>> first_moment;
    std::vector<std::vector<T>> second_moment;
    std::uint64_t step_count = 0;
};

// One bias-corrected Adam update over every parameter. Every parameter must
// carry a gradient.
template <typename T>
void adam_step(const ParameterList<T>& params, OptimizerState<T>& state) {
    for (const auto& p : params) {
        if (!p.tensor.has_grad()) {
            throw StateError("adam_step: parameter '" + p.name + "' has no gradient");
        }
    }
    if (state.first_moment.empty()) {
        for (const auto& p : params) {
            state.first_moment.emplace_back(p.tensor.numel(), T(0));
            state.second_moment.emplace_back(p.tensor.numel(), T(0));
        }
    }
    if (state.first_moment.size() != params.size()) {
        throw StateError("adam_step: optimizer state tracks " +
                         std::to_string(state.first_moment.size()) + " parameters, got " +
                         std::to_string(params.size()));
    }
    const auto& c = state.config;
    const std::uint64_t t = state.step_count + 1;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(t));
    const T b1 = static_cast<T>(c.beta1), b2 = static_cast<T>(c.beta2);
    const T step_size = static_cast<T>(c.learning_rate / bc1);
    const T inv_bc2 = static_cast<T>(1.0 / bc2);
    const T eps = static_cast<T>(c.epsilon);
    const T c1 = static_cast<T>(1.0 - c.beta1), c2 = static_cast<T>(1.0 - c.beta2);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto tensor = params[i].tensor;
        auto& m = state.first_moment[i];
        auto& v = state.second_moment[i];
        if (m.size() != tensor.numel()) {
            throw StateError("adam_step: moment buffer shape mismatch for '" + params[i].name + "'");
        }
        auto w = tensor.mutable_data();
        auto g = tensor.grad();
        for (std::size_t j = 0; j < w.size(); ++j) {
            m[j] = b1 * m[j] + c1 * g[j];
            v[j] = b2 * v[j] + c2 * g[j] * g[j];
            w[j] -= step_size * m[j] / (std::sqrt(v[j] * inv_bc2) + eps);
        }
    }
    state.step_count = t;
}

template <typename T>
void zero_grads(const ParameterList<T>& params) {
    for (auto p : params) p.tensor.zero_grad();
}

} // namespace duckmorph::tensor
