// Copyright (c) 2026, The Fuseformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "fuseformer/adapters.hpp"

#include <algorithm>

#include "fuseformer/errors.hpp"
#include "fuseformer/heads.hpp"

namespace fuseformer {

namespace {

std::string adapter_prefix(const std::string& task, std::size_t layer) {
    return "adapter." + task + ".layer." + std::to_string(layer) + ".";
}

std::string fusion_prefix(std::size_t layer) { return "fusion.layer." + std::to_string(layer) + "."; }

} // namespace

Layout adapter_layout(const ModelConfig& config, const std::string& task) {
    config.validate();
    if (task.empty()) throw ConfigError("adapter needs a task name");
    const std::string g = "adapter:" + task;
    const std::size_t h = config.hidden_size, r = config.bottleneck();
    Layout out;
    for (std::size_t i = 0; i < config.num_layers; ++i) {
        const auto p = adapter_prefix(task, i);
        out.push_back({p + "down.weight", {h, r}, g, true, InitKind::normal});
        out.push_back({p + "down.bias", {r}, g, false, InitKind::zeros});
        out.push_back({p + "up.weight", {r, h}, g, true, InitKind::small_normal});
        out.push_back({p + "up.bias", {h}, g, false, InitKind::zeros});
    }
    return out;
}

Layout fusion_layout(const ModelConfig& config) {
    config.validate();
    const std::size_t h = config.hidden_size;
    Layout out;
    for (std::size_t i = 0; i < config.num_layers; ++i)
        for (const char* m : {"query", "key", "value"})
            out.push_back({fusion_prefix(i) + m, {h, h}, "fusion", true, InitKind::normal});
    return out;
}

AdapterParams AdapterParams::bind(const ParamStore& s, const ModelConfig& config, const std::string& task) {
    AdapterParams p;
    p.task = task;
    for (std::size_t i = 0; i < config.num_layers; ++i) {
        const auto x = adapter_prefix(task, i);
        if (!s.contains(x + "down.weight")) throw ConfigError("no adapter for task '" + task + "'");
        p.layers.push_back({s.at(x + "down.weight"), s.at(x + "down.bias"), s.at(x + "up.weight"), s.at(x + "up.bias")});
    }
    return p;
}

FusionParams FusionParams::bind(const ParamStore& s, const ModelConfig& config, std::vector<std::string> tasks) {
    FusionParams p;
    p.tasks = std::move(tasks);
    for (std::size_t i = 0; i < config.num_layers; ++i) {
        const auto x = fusion_prefix(i);
        if (!s.contains(x + "query")) throw ConfigError("model has no fusion layer");
        p.layers.push_back({s.at(x + "query"), s.at(x + "key"), s.at(x + "value")});
    }
    return p;
}

Tensor adapter_forward(const Tensor& h_ff, const AdapterLayer& adapter) {
    const Tensor u = relu(linear(h_ff, adapter.down_w, adapter.down_b));
    return add(h_ff, linear(u, adapter.up_w, adapter.up_b));
}

FusionOutput fusion_forward(const Tensor& h_ff, const std::vector<Tensor>& adapter_outputs, const FusionLayer& fusion) {
    if (adapter_outputs.empty()) throw ContractError("fusion_forward: needs at least one adapter output");
    if (h_ff.rank() != 3) throw DimensionError("fusion_forward: expected [B×L×H], got " + shape_str(h_ff.shape()));
    const std::size_t b = h_ff.dim(0), l = h_ff.dim(1), hs = h_ff.dim(2), n = b * l;
    const std::size_t t = adapter_outputs.size();

    std::vector<Tensor> keys, values;
    keys.reserve(t);
    values.reserve(t);
    for (const auto& a : adapter_outputs) {
        if (a.shape() != h_ff.shape())
            throw DimensionError("fusion_forward: adapter output " + shape_str(a.shape()) + " vs " +
                                 shape_str(h_ff.shape()));
        const Tensor rows = reshape(a, {n, hs});
        keys.push_back(linear(rows, fusion.key, {}));
        values.push_back(linear(rows, fusion.value, {}));
    }
    const Tensor q = reshape(linear(h_ff, fusion.query, {}), {n, 1, hs});
    const Tensor alpha = softmax(bmm(q, stack(keys, 1), true), -1); // [N×1×T]
    const Tensor ctx = reshape(bmm(alpha, stack(values, 1)), {b, l, hs});
    return {add(ctx, h_ff), reshape(alpha, {b, l, t})};
}

std::vector<LayerSlot> attach(const ParamStore& store, const ModelConfig& config, const SlotMode& mode) {
    std::vector<LayerSlot> slots(config.num_layers);
    if (mode.kind == SlotKind::none) return slots;
    if (mode.tasks.empty()) throw ConfigError("adapter slot mode needs at least one task");
    if (mode.kind == SlotKind::single && mode.tasks.size() != 1)
        throw ConfigError("single adapter mode takes exactly one task");

    std::vector<AdapterParams> adapters;
    for (const auto& t : mode.tasks) adapters.push_back(AdapterParams::bind(store, config, t));
    FusionParams fusion;
    if (mode.kind == SlotKind::fusion) fusion = FusionParams::bind(store, config, mode.tasks);

    for (std::size_t i = 0; i < config.num_layers; ++i) {
        slots[i].kind = mode.kind;
        for (const auto& a : adapters) slots[i].adapters.push_back(a.layers[i]);
        if (mode.kind == SlotKind::fusion) slots[i].fusion = fusion.layers[i];
    }
    return slots;
}

std::string stage_name(const Stage& stage) {
    switch (stage.kind) {
    case Stage::Kind::adapter_training: return "adapter_training";
    case Stage::Kind::fusion_training: return "fusion_training";
    case Stage::Kind::full_finetune: return "full_finetune";
    }
    return "";
}

bool group_trainable(const Stage& stage, const std::string& group) {
    const std::string head = "head:" + stage.task;
    switch (stage.kind) {
    case Stage::Kind::adapter_training: return group == "adapter:" + stage.task || group == head;
    case Stage::Kind::fusion_training: return group == "fusion" || group == head;
    case Stage::Kind::full_finetune: return group == "encoder" || group == head;
    }
    return false;
}

void set_trainable(ParamStore& store, const Stage& stage) {
    store.set_trainable([&](const std::string& g) { return group_trainable(stage, g); });
}

Layout model_layout(const ModelConfig& config, SlotKind mode, std::size_t num_tasks, std::size_t num_labels) {
    Layout out = encoder_layout(config);
    auto append = [&out](const Layout& l) { out.insert(out.end(), l.begin(), l.end()); };
    const std::size_t adapters = mode == SlotKind::none ? 0 : mode == SlotKind::single ? 1 : num_tasks;
    if (mode == SlotKind::fusion && num_tasks == 0) throw ConfigError("fusion needs at least one task");
    for (std::size_t t = 0; t < adapters; ++t) append(adapter_layout(config, "task" + std::to_string(t)));
    if (mode == SlotKind::fusion) append(fusion_layout(config));
    append(head_layout(config, "target", num_labels));
    return out;
}

ParamCount count_parameters(const ModelConfig& config, SlotKind mode, std::size_t num_tasks, std::size_t num_labels) {
    const Layout layout = model_layout(config, mode, num_tasks, num_labels);
    Stage stage;
    switch (mode) {
    case SlotKind::none: stage = Stage::full_finetune("target"); break;
    case SlotKind::single: stage = Stage::adapter_training("task0"); break;
    case SlotKind::fusion: stage = Stage::fusion_training("target"); break;
    }
    // The single-adapter head is named "target" too; map it into the stage.
    ParamCount c;
    for (const auto& p : layout) {
        const std::size_t n = shape_numel(p.shape);
        c.total += n;
        const bool head = p.group == "head:target";
        if (group_trainable(stage, p.group) || head) c.trainable += n;
    }
    return c;
}

ParamCount count_parameters(const ParamStore& store) { return {store.total_count(), store.trainable_count()}; }

} // namespace fuseformer
