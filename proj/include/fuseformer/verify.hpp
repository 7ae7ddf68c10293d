// Copyright (c) 2026, The Fuseformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "fuseformer/encoder.hpp"
#include "fuseformer/gradcheck.hpp"

namespace fuseformer {

/// Report block of a parameter: embeddings, attention, feed_forward,
/// adapter, fusion or head.
std::string param_block(const std::string& name);

/// Finite-difference check of a whole model (encoder, two adapters, fusion
/// and an emotion head, every parameter trainable) on a tiny random batch
/// under weighted BCE. Parameters are jittered away from their symmetric
/// initial values first so that no block is checked at a degenerate point.
FdReport check_model_gradients(const ModelConfig& config, const FdOptions& options, const GradHook& hook = {});

} // namespace fuseformer
