#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "modnet/tensor.hpp"

namespace modnet {

// Adam with bias correction, fixed to the standard defaults; the only knob a
// caller normally touches is the learning rate.
template <typename T>
struct AdamState {
    std::int64_t step = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::vector<Tensor<T>> m;  // first moments, aligned with the parameter list
    std::vector<Tensor<T>> v;  // second moments

    void init(const std::vector<const Tensor<T>*>& params) {
        m.clear();
        v.clear();
        for (const Tensor<T>* p : params) {
            m.emplace_back(p->shape());
            v.emplace_back(p->shape());
        }
    }
};

// One update over the whole parameter list. A null gradient entry means the
// parameter was unreachable from the loss and is treated as zero gradient.
template <typename T>
void adam_step(const std::vector<Tensor<T>*>& params,
               const std::vector<const Tensor<T>*>& grads, AdamState<T>& state) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw ShapeError("adam_step: parameter/gradient/state count mismatch");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    const T b1 = static_cast<T>(state.beta1);
    const T b2 = static_cast<T>(state.beta2);
    const T one_m_b1 = static_cast<T>(1.0 - state.beta1);
    const T one_m_b2 = static_cast<T>(1.0 - state.beta2);
    const T lr1 = static_cast<T>(state.lr / bc1);
    const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
    const T eps = static_cast<T>(state.epsilon);

    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor<T>& p = *params[i];
        Tensor<T>& m = state.m[i];
        Tensor<T>& v = state.v[i];
        if (!p.same_shape(m))
            throw ShapeError("adam_step: state shape does not match parameter shape");
        if (grads[i] && !grads[i]->empty()) {
            const Tensor<T>& g = *grads[i];
            if (!g.same_shape(p))
                throw ShapeError("adam_step: gradient shape " + shape_str(g.shape()) +
                                 " does not match parameter shape " + shape_str(p.shape()));
            for (std::size_t j = 0; j < p.size(); ++j) {
                m[j] = b1 * m[j] + one_m_b1 * g[j];
                v[j] = b2 * v[j] + one_m_b2 * g[j] * g[j];
                p[j] -= lr1 * m[j] / (std::sqrt(v[j]) * inv_sqrt_bc2 + eps);
            }
        } else {
            for (std::size_t j = 0; j < p.size(); ++j) {
                m[j] = b1 * m[j];
                v[j] = b2 * v[j];
                p[j] -= lr1 * m[j] / (std::sqrt(v[j]) * inv_sqrt_bc2 + eps);
            }
        }
    }
}

// Single-tensor convenience.
template <typename T>
void adam_step(Tensor<T>& param, const Tensor<T>& grad, AdamState<T>& state) {
    if (state.m.empty()) state.init({&param});
    adam_step<T>({&param}, {&grad}, state);
}

}  // namespace modnet
