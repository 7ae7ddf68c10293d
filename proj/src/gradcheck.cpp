// Copyright (c) 2026, The Fuseformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "fuseformer/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fuseformer/errors.hpp"

namespace fuseformer {

double fd_relative_error(double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

double central_difference(const std::function<double()>& f, Tensor& param, std::size_t index, double h) {
    if (!(h > 0)) throw ContractError("central_difference: h must be positive");
    auto data = param.mutable_data();
    const double saved = data[index];
    data[index] = saved + h;
    const double plus = f();
    data[index] = saved - h;
    const double minus = f();
    data[index] = saved;
    return (plus - minus) / (2.0 * h);
}

FdReport finite_difference_check(const std::function<Tensor()>& loss, std::vector<CheckedParam>& params,
                                 const FdOptions& options, const GradHook& hook) {
    if (!(options.h > 0)) throw ContractError("finite_difference_check: h must be positive");

    for (auto& p : params) {
        p.tensor.set_requires_grad(true);
        p.tensor.zero_grad();
    }
    backward(loss());

    FdReport report;
    report.tol = options.tol;
    std::mt19937_64 rng(options.seed);
    const std::function<double()> value = [&loss] { return loss().item(); };

    for (auto& p : params) {
        std::vector<double> analytic(p.tensor.numel(), 0.0);
        if (p.tensor.has_grad()) std::copy(p.tensor.grad().begin(), p.tensor.grad().end(), analytic.begin());
        if (hook) hook(p, analytic);

        std::vector<std::size_t> coords(p.tensor.numel());
        std::iota(coords.begin(), coords.end(), std::size_t{0});
        if (options.max_coords_per_tensor > 0 && coords.size() > options.max_coords_per_tensor) {
            std::shuffle(coords.begin(), coords.end(), rng);
            coords.resize(options.max_coords_per_tensor);
            std::sort(coords.begin(), coords.end());
        }

        auto it = std::find_if(report.blocks.begin(), report.blocks.end(),
                               [&](const FdBlockReport& b) { return b.block == p.block; });
        if (it == report.blocks.end()) {
            report.blocks.push_back(FdBlockReport{.block = p.block});
            it = std::prev(report.blocks.end());
        }
        FdBlockReport& block = *it;
        ++block.tensors;
        for (auto idx : coords) {
            const double numeric = central_difference(value, p.tensor, idx, options.h);
            const double err = fd_relative_error(analytic[idx], numeric);
            ++block.coords;
            if (err > block.max_rel_error || block.worst_param.empty()) {
                block.max_rel_error = std::max(block.max_rel_error, err);
                block.worst_param = p.name;
                block.worst_index = idx;
                block.worst_analytic = analytic[idx];
                block.worst_numeric = numeric;
            }
        }
        block.pass = block.max_rel_error < options.tol;
    }
    report.pass = std::all_of(report.blocks.begin(), report.blocks.end(), [](const auto& b) { return b.pass; });
    for (auto& p : params) p.tensor.zero_grad();
    return report;
}

} // namespace fuseformer
