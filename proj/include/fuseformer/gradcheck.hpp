// Copyright (c) 2026, The Fuseformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fuseformer/tensor.hpp"

namespace fuseformer {

/// A parameter tensor tagged with the report block it belongs to.
struct CheckedParam {
    std::string name;
    std::string block;
    Tensor tensor;
};

struct FdOptions {
    double h = 1e-5;
    double tol = 1e-4;
    /// Coordinates sampled per tensor; 0 checks every coordinate.
    std::size_t max_coords_per_tensor = 0;
    std::uint64_t seed = 0;
};

struct FdBlockReport {
    std::string block;
    std::size_t tensors = 0;
    std::size_t coords = 0;
    double max_rel_error = 0;
    std::string worst_param;
    std::size_t worst_index = 0;
    double worst_analytic = 0;
    double worst_numeric = 0;
    bool pass = true;
};

struct FdReport {
    double tol = 0;
    std::vector<FdBlockReport> blocks; // in first-appearance order
    bool pass = true;
};

/// |a - b| / max(1, |a|, |b|)
double fd_relative_error(double a, double b);

/// (f(p + h) - f(p - h)) / 2h for one coordinate; restores p afterwards.
double central_difference(const std::function<double()>& f, Tensor& param, std::size_t index, double h);

/// Optional hook that may tamper with an analytic gradient before comparison.
using GradHook = std::function<void(const CheckedParam&, std::vector<double>&)>;

/// Compares analytic gradients from backward() with central differences.
/// `loss` must rebuild the scalar loss from the current parameter values.
FdReport finite_difference_check(const std::function<Tensor()>& loss, std::vector<CheckedParam>& params,
                                 const FdOptions& options, const GradHook& hook = {});

} // namespace fuseformer
