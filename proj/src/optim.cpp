// Copyright (c) 2026, The Fuseformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "fuseformer/optim.hpp"

#include <cmath>

#include "fuseformer/errors.hpp"

namespace fuseformer {

void adamw_update(std::span<double> param, std::span<const double> grad, std::span<double> m, std::span<double> v,
                  std::size_t t, double lr, const AdamWConfig& c, bool decay) {
    if (grad.size() != param.size() || m.size() != param.size() || v.size() != param.size())
        throw ContractError("adamw: parameter, gradient and moment sizes differ");
    if (t == 0) throw ContractError("adamw: step index starts at 1");
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(t));
    const double lambda = decay ? c.weight_decay : 0.0;
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double g = grad[i];
        m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
        v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
        const double m_hat = m[i] / bc1;
        const double v_hat = v[i] / bc2;
        const double p = param[i];
        param[i] = p - lr * (m_hat / (std::sqrt(v_hat) + c.eps)) - lr * lambda * p;
    }
}

double lr_schedule(std::size_t step, std::size_t total_steps, double base_lr, std::size_t warmup_steps) {
    if (step > total_steps) throw ContractError("lr_schedule: step beyond total_steps");
    if (warmup_steps > 0 && step < warmup_steps)
        return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
    if (total_steps <= warmup_steps) return base_lr;
    return base_lr * (1.0 - static_cast<double>(step - warmup_steps) / static_cast<double>(total_steps - warmup_steps));
}

void AdamW::step(const std::vector<ParamStore::Entry>& params, double lr) {
    ++t_;
    std::vector<double> zeros;
    for (const auto& e : params) {
        Tensor tensor = e.tensor;
        auto& st = state_[e.spec.name];
        if (st.m.empty()) {
            st.m.assign(tensor.numel(), 0.0);
            st.v.assign(tensor.numel(), 0.0);
        }
        if (st.m.size() != tensor.numel()) throw ContractError("adamw: parameter " + e.spec.name + " changed shape");
        std::span<const double> g;
        if (tensor.has_grad()) {
            g = tensor.grad();
        } else {
            zeros.assign(tensor.numel(), 0.0);
            g = zeros;
        }
        adamw_update(tensor.mutable_data(), g, st.m, st.v, t_, lr, config_, e.spec.decay);
    }
}

} // namespace fuseformer
