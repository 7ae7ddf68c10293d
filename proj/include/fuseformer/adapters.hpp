// Copyright (c) 2026, The Fuseformer Authors
// SPDX-License-Identifier: Apache-2.0
//
// Task adapters, the attention-based fusion layer that composes them, the
// freeze protocol of the two training stages, and parameter accounting.

#pragma once

#include <string>
#include <vector>

#include "fuseformer/encoder.hpp"
#include "fuseformer/params.hpp"

namespace fuseformer {

/// Per layer: down [H×H/r] + bias, up [H/r×H] + bias. Up-projection starts
/// near zero so a fresh adapter is close to the identity.
Layout adapter_layout(const ModelConfig& config, const std::string& task);
/// Per layer: query, key, value maps [H×H], no biases.
Layout fusion_layout(const ModelConfig& config);

struct AdapterParams {
    std::string task;
    std::vector<AdapterLayer> layers;

    static AdapterParams bind(const ParamStore& store, const ModelConfig& config, const std::string& task);
};

struct FusionParams {
    std::vector<std::string> tasks;
    std::vector<FusionLayer> layers;

    static FusionParams bind(const ParamStore& store, const ModelConfig& config, std::vector<std::string> tasks);
};

/// u = relu(h·W_down + b_down); output = h + u·W_up + b_up
Tensor adapter_forward(const Tensor& h_ff, const AdapterLayer& adapter);

struct FusionOutput {
    Tensor output;  // [B×L×H]
    Tensor weights; // [B×L×T]
};

/// Per position: q = h·W_q, k_t = a_t·W_k, v_t = a_t·W_v,
/// α = softmax_t(⟨q, k_t⟩), output = Σ_t α_t v_t + h.
FusionOutput fusion_forward(const Tensor& h_ff, const std::vector<Tensor>& adapter_outputs, const FusionLayer& fusion);

struct SlotMode {
    SlotKind kind = SlotKind::none;
    std::vector<std::string> tasks;

    static SlotMode none() { return {}; }
    static SlotMode single(std::string task) { return {SlotKind::single, {std::move(task)}}; }
    static SlotMode fusion(std::vector<std::string> tasks) { return {SlotKind::fusion, std::move(tasks)}; }
};

/// Resolves a slot mode to per-layer slots, identical for every layer.
/// Throws ConfigError for tasks without adapters or a missing fusion layer.
std::vector<LayerSlot> attach(const ParamStore& store, const ModelConfig& config, const SlotMode& mode);

/// Which parameter groups a training stage updates.
struct Stage {
    enum class Kind { adapter_training, fusion_training, full_finetune };
    Kind kind = Kind::adapter_training;
    std::string task;

    static Stage adapter_training(std::string task) { return {Kind::adapter_training, std::move(task)}; }
    static Stage fusion_training(std::string target) { return {Kind::fusion_training, std::move(target)}; }
    static Stage full_finetune(std::string task) { return {Kind::full_finetune, std::move(task)}; }
};

std::string stage_name(const Stage& stage);
bool group_trainable(const Stage& stage, const std::string& group);
/// Sets requires_grad on every parameter from its group and clears grads.
void set_trainable(ParamStore& store, const Stage& stage);

struct ParamCount {
    std::size_t total = 0;
    std::size_t trainable = 0;
};

/// Shape-only layout of a complete model: encoder, the adapters the mode
/// needs (named task0..), fusion when applicable, and one head.
Layout model_layout(const ModelConfig& config, SlotKind mode, std::size_t num_tasks, std::size_t num_labels);
/// Counts without allocating weights. Trainable follows the stage implied
/// by the mode: none fine-tunes everything, single trains adapter + head,
/// fusion trains fusion + head.
ParamCount count_parameters(const ModelConfig& config, SlotKind mode, std::size_t num_tasks, std::size_t num_labels);
/// Counts an instantiated store using its current requires_grad flags.
ParamCount count_parameters(const ParamStore& store);

} // namespace fuseformer
