#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "wmx2/tensor.hpp"

namespace wmx2 {

// AdamW with decoupled weight decay: theta -= lr * (mhat/(sqrt(vhat)+eps) +
// weight_decay * theta), bias-corrected moments.
template <typename T>
struct AdamWStateT {
    T lr = T(0.001);
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T epsilon = T(1e-8);
    T weight_decay = T(0.01);
    int64_t t = 0;
    std::vector<TensorT<T>> m, v;

    void reset(const std::vector<TensorT<T>*>& params) {
        t = 0;
        m.clear();
        v.clear();
        for (const auto* p : params) {
            m.emplace_back(p->shape());
            v.emplace_back(p->shape());
        }
    }

    void step(const std::vector<TensorT<T>*>& params, const std::vector<TensorT<T>>& grads) {
        if (params.size() != grads.size() || params.size() != m.size()) {
            throw ShapeError("adamw_step: parameter/gradient/state count mismatch");
        }
        ++t;
        const double bc1 = 1.0 - std::pow(static_cast<double>(beta1), static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(static_cast<double>(beta2), static_cast<double>(t));
        for (size_t i = 0; i < params.size(); ++i) {
            TensorT<T>& p = *params[i];
            const TensorT<T>& g = grads[i];
            if (!p.same_shape(g)) throw ShapeError("adamw_step: gradient shape mismatch");
            TensorT<T>& mi = m[i];
            TensorT<T>& vi = v[i];
            for (int64_t j = 0; j < p.size(); ++j) {
                mi[j] = beta1 * mi[j] + (T(1) - beta1) * g[j];
                vi[j] = beta2 * vi[j] + (T(1) - beta2) * g[j] * g[j];
                const double mhat = static_cast<double>(mi[j]) / bc1;
                const double vhat = static_cast<double>(vi[j]) / bc2;
                const double update = mhat / (std::sqrt(vhat) + static_cast<double>(epsilon)) +
                                      static_cast<double>(weight_decay) * p[j];
                p[j] = static_cast<T>(p[j] - static_cast<double>(lr) * update);
            }
        }
    }
};

// SGD with classical momentum: v <- mu*v + g; theta <- theta - lr*v.
template <typename T>
struct SgdStateT {
    T lr = T(0.001);
    T momentum = T(0.9);
    std::vector<TensorT<T>> velocity;

    void reset(const std::vector<TensorT<T>*>& params) {
        velocity.clear();
        for (const auto* p : params) velocity.emplace_back(p->shape());
    }

    void step(const std::vector<TensorT<T>*>& params, const std::vector<TensorT<T>>& grads) {
        if (params.size() != grads.size() || params.size() != velocity.size()) {
            throw ShapeError("sgd_step: parameter/gradient/state count mismatch");
        }
        for (size_t i = 0; i < params.size(); ++i) {
            TensorT<T>& p = *params[i];
            const TensorT<T>& g = grads[i];
            if (!p.same_shape(g)) throw ShapeError("sgd_step: gradient shape mismatch");
            TensorT<T>& vel = velocity[i];
            for (int64_t j = 0; j < p.size(); ++j) {
                vel[j] = momentum * vel[j] + g[j];
                p[j] = p[j] - lr * vel[j];
            }
        }
    }
};

using AdamWState = AdamWStateT<float>;
using SgdState = SgdStateT<float>;

}  // namespace wmx2
