// Copyright (c) 2026, The Fuseformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "fuseformer/gradcheck.hpp"
#include "fuseformer/tensor.hpp"

namespace fuseformer::testing {

inline std::vector<double> uniform_values(std::mt19937_64& rng, std::size_t n, double lo = -2.0, double hi = 2.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

inline Tensor random_tensor(std::mt19937_64& rng, Shape shape, double lo = -2.0, double hi = 2.0) {
    const std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), uniform_values(rng, n, lo, hi), true);
}

/// Largest relative error between analytic and central-difference gradients
/// of `f` with respect to every coordinate of every input.
inline double max_fd_error(const std::function<Tensor()>& f, std::vector<Tensor> inputs, double h = 1e-5) {
    std::vector<CheckedParam> params;
    for (std::size_t i = 0; i < inputs.size(); ++i) params.push_back({"x" + std::to_string(i), "x", inputs[i]});
    FdOptions opt;
    opt.h = h;
    opt.tol = 1.0;
    const FdReport r = finite_difference_check(f, params, opt);
    double worst = 0;
    for (const auto& b : r.blocks) worst = std::max(worst, b.max_rel_error);
    return worst;
}

/// Reduces a tensor to a scalar with fixed random weights so that every
/// output coordinate carries a distinct gradient.
inline Tensor weighted_sum(const Tensor& x, std::uint64_t seed = 99) {
    std::mt19937_64 rng(seed);
    return sum(mul(x, Tensor(x.shape(), uniform_values(rng, x.numel(), -1.0, 1.0))));
}

} // namespace fuseformer::testing
