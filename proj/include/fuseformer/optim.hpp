// Copyright (c) 2026, The Fuseformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "fuseformer/params.hpp"

namespace fuseformer {

struct AdamWConfig {
    double weight_decay = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// One AdamW update of a single buffer at step t >= 1, with decoupled decay
/// applied to the pre-update value.
void adamw_update(std::span<double> param, std::span<const double> grad, std::span<double> m, std::span<double> v,
                  std::size_t t, double lr, const AdamWConfig& config, bool decay);

/// Linear decay from base_lr at step 0 to zero at total_steps, after an
/// optional linear warmup.
double lr_schedule(std::size_t step, std::size_t total_steps, double base_lr, std::size_t warmup_steps = 0);

class AdamW {
  public:
    explicit AdamW(AdamWConfig config) : config_(config) {}

    /// Updates every entry from its current grad (absent grad counts as 0).
    /// Weight decay is skipped for entries whose spec has decay == false.
    void step(const std::vector<ParamStore::Entry>& params, double lr);
    std::size_t steps() const { return t_; }

  private:
    struct Moments {
        std::vector<double> m, v;
    };
    AdamWConfig config_;
    std::size_t t_ = 0;
    std::unordered_map<std::string, Moments> state_;
};

} // namespace fuseformer
