// Copyright (c) 2026, The Fuseformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "fuseformer/encoder.hpp"

#include <cmath>

#include "fuseformer/adapters.hpp"
#include "fuseformer/errors.hpp"

namespace fuseformer {

namespace {

constexpr double kMaskedScore = -1e9;

std::string layer_prefix(std::size_t i) { return "encoder.layer." + std::to_string(i) + "."; }

void add_linear(Layout& out, const std::string& name, std::size_t in, std::size_t out_dim, const std::string& group) {
    out.push_back({name + ".weight", {in, out_dim}, group, true, InitKind::normal});
    out.push_back({name + ".bias", {out_dim}, group, false, InitKind::zeros});
}

void add_norm(Layout& out, const std::string& name, std::size_t h, const std::string& group) {
    out.push_back({name + ".gamma", {h}, group, false, InitKind::ones});
    out.push_back({name + ".beta", {h}, group, false, InitKind::zeros});
}

} // namespace

void ModelConfig::validate() const {
    if (num_layers == 0 || hidden_size == 0 || num_heads == 0 || ff_size == 0 || vocab_size == 0 ||
        max_positions == 0 || num_segments == 0 || reduction_factor == 0)
        throw ConfigError("model config: all extents must be positive");
    if (hidden_size % num_heads != 0) throw ConfigError("model config: hidden_size must be divisible by num_heads");
    if (hidden_size % reduction_factor != 0)
        throw ConfigError("model config: reduction_factor must divide hidden_size");
    if (vocab_size <= Vocabulary::kNumSpecials) throw ConfigError("model config: vocab_size too small");
    if (!(eps > 0)) throw ConfigError("model config: eps must be positive");
}

ModelConfig reference_base_config() {
    ModelConfig c;
    c.num_layers = 12;
    c.hidden_size = 768;
    c.num_heads = 12;
    c.ff_size = 3072;
    c.vocab_size = 28996;
    c.max_positions = 512;
    c.num_segments = 2;
    c.reduction_factor = 16;
    return c;
}

Layout encoder_layout(const ModelConfig& config) {
    config.validate();
    const std::string g = "encoder";
    const std::size_t h = config.hidden_size;
    Layout out;
    out.push_back({"encoder.embeddings.token", {config.vocab_size, h}, g, true, InitKind::normal});
    out.push_back({"encoder.embeddings.position", {config.max_positions, h}, g, true, InitKind::normal});
    out.push_back({"encoder.embeddings.segment", {config.num_segments, h}, g, true, InitKind::normal});
    add_norm(out, "encoder.embeddings.norm", h, g);
    for (std::size_t i = 0; i < config.num_layers; ++i) {
        const auto p = layer_prefix(i);
        for (const char* proj : {"query", "key", "value", "output"}) add_linear(out, p + "attention." + proj, h, h, g);
        add_norm(out, p + "attention.norm", h, g);
        add_linear(out, p + "ffn.in", h, config.ff_size, g);
        add_linear(out, p + "ffn.out", config.ff_size, h, g);
        add_norm(out, p + "ffn.norm", h, g);
    }
    return out;
}

EncoderParams EncoderParams::bind(const ParamStore& s, const ModelConfig& config) {
    EncoderParams p;
    p.token = s.at("encoder.embeddings.token");
    p.position = s.at("encoder.embeddings.position");
    p.segment = s.at("encoder.embeddings.segment");
    p.norm_gamma = s.at("encoder.embeddings.norm.gamma");
    p.norm_beta = s.at("encoder.embeddings.norm.beta");
    for (std::size_t i = 0; i < config.num_layers; ++i) {
        const auto x = layer_prefix(i);
        EncoderLayerParams l;
        l.query_w = s.at(x + "attention.query.weight");
        l.query_b = s.at(x + "attention.query.bias");
        l.key_w = s.at(x + "attention.key.weight");
        l.key_b = s.at(x + "attention.key.bias");
        l.value_w = s.at(x + "attention.value.weight");
        l.value_b = s.at(x + "attention.value.bias");
        l.output_w = s.at(x + "attention.output.weight");
        l.output_b = s.at(x + "attention.output.bias");
        l.attn_norm_gamma = s.at(x + "attention.norm.gamma");
        l.attn_norm_beta = s.at(x + "attention.norm.beta");
        l.ff_in_w = s.at(x + "ffn.in.weight");
        l.ff_in_b = s.at(x + "ffn.in.bias");
        l.ff_out_w = s.at(x + "ffn.out.weight");
        l.ff_out_b = s.at(x + "ffn.out.bias");
        l.ff_norm_gamma = s.at(x + "ffn.norm.gamma");
        l.ff_norm_beta = s.at(x + "ffn.norm.beta");
        p.layers.push_back(std::move(l));
    }
    return p;
}

AttentionMask mask_of(const Batch& batch) { return {batch.batch_size, batch.seq_len, batch.attention_mask}; }

Tensor embed(const Batch& batch, const EncoderParams& params, const ModelConfig& config) {
    const std::size_t b = batch.batch_size, l = batch.seq_len, h = config.hidden_size;
    if (b == 0 || l == 0) throw ContractError("embed: empty batch");
    if (l > config.max_positions)
        throw ContractError("embed: sequence length " + std::to_string(l) + " exceeds max_positions " +
                            std::to_string(config.max_positions));
    if (batch.token_ids.size() != b * l || batch.segment_ids.size() != b * l)
        throw ContractError("embed: batch arrays do not match [B×L]");
    for (auto id : batch.token_ids)
        if (id >= config.vocab_size)
            throw ContractError("embed: token id " + std::to_string(id) + " >= vocab_size " +
                                std::to_string(config.vocab_size));
    for (auto id : batch.segment_ids)
        if (id >= config.num_segments) throw ContractError("embed: segment id out of range");

    std::vector<std::size_t> positions(b * l);
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < l; ++j) positions[i * l + j] = j;

    Tensor sum3 = add(add(gather_rows(params.token, batch.token_ids), gather_rows(params.position, positions)),
                      gather_rows(params.segment, batch.segment_ids));
    return layer_norm(reshape(sum3, {b, l, h}), params.norm_gamma, params.norm_beta, config.eps);
}

AttentionOutput multi_head_attention(const Tensor& h, const AttentionMask& mask, const EncoderLayerParams& layer,
                                     const ModelConfig& config) {
    if (h.rank() != 3) throw DimensionError("attention: expected [B×L×H], got " + shape_str(h.shape()));
    const std::size_t b = h.dim(0), l = h.dim(1), hs = h.dim(2);
    const std::size_t nh = config.num_heads, dh = config.head_dim();
    if (mask.batch != b || mask.length != l || mask.values.size() != b * l)
        throw DimensionError("attention: mask shape does not match " + shape_str(h.shape()));

    auto heads = [&](const Tensor& w, const Tensor& bias) {
        return reshape(permute(reshape(linear(h, w, bias), {b, l, nh, dh}), {0, 2, 1, 3}), {b * nh, l, dh});
    };
    const Tensor q = heads(layer.query_w, layer.query_b);
    const Tensor k = heads(layer.key_w, layer.key_b);
    const Tensor v = heads(layer.value_w, layer.value_b);

    std::vector<double> bias(b * nh * l * l, 0.0);
    for (std::size_t bi = 0; bi < b; ++bi)
        for (std::size_t key = 0; key < l; ++key)
            if (!mask.values[bi * l + key])
                for (std::size_t hd = 0; hd < nh; ++hd)
                    for (std::size_t query = 0; query < l; ++query)
                        bias[((bi * nh + hd) * l + query) * l + key] = kMaskedScore;

    const Tensor scores = add(scale(bmm(q, k, true), 1.0 / std::sqrt(static_cast<double>(dh))),
                              Tensor({b * nh, l, l}, std::move(bias)));
    Tensor probs = softmax(scores, -1);
    const Tensor ctx = reshape(permute(reshape(bmm(probs, v), {b, nh, l, dh}), {0, 2, 1, 3}), {b, l, hs});
    return {linear(ctx, layer.output_w, layer.output_b), probs};
}

LayerOutput encoder_layer_forward(const Tensor& h, const AttentionMask& mask, const EncoderLayerParams& layer,
                                  const LayerSlot& slot, const ModelConfig& config) {
    auto attn = multi_head_attention(h, mask, layer, config);
    const Tensor a = layer_norm(add(h, attn.output), layer.attn_norm_gamma, layer.attn_norm_beta, config.eps);
    const Tensor f = linear(gelu(linear(a, layer.ff_in_w, layer.ff_in_b)), layer.ff_out_w, layer.ff_out_b);
    const Tensor ff = layer_norm(add(a, f), layer.ff_norm_gamma, layer.ff_norm_beta, config.eps);

    LayerOutput out;
    out.attention_probs = attn.probs;
    switch (slot.kind) {
    case SlotKind::none: out.hidden = ff; break;
    case SlotKind::single:
        if (slot.adapters.size() != 1) throw ContractError("single adapter slot needs exactly one adapter");
        out.hidden = adapter_forward(ff, slot.adapters[0]);
        break;
    case SlotKind::fusion: {
        std::vector<Tensor> outs;
        outs.reserve(slot.adapters.size());
        for (const auto& ad : slot.adapters) outs.push_back(adapter_forward(ff, ad));
        auto fused = fusion_forward(ff, outs, slot.fusion);
        out.hidden = fused.output;
        out.fusion_weights = fused.weights;
        break;
    }
    }
    return out;
}

EncodeOutput encode(const Batch& batch, const EncoderParams& params, const std::vector<LayerSlot>& slots,
                    const ModelConfig& config) {
    if (!slots.empty() && slots.size() != params.layers.size())
        throw ContractError("encode: expected " + std::to_string(params.layers.size()) + " layer slots, got " +
                            std::to_string(slots.size()));
    const AttentionMask mask = mask_of(batch);
    const LayerSlot vanilla;
    EncodeOutput out;
    Tensor h = embed(batch, params, config);
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
        auto lo = encoder_layer_forward(h, mask, params.layers[i], slots.empty() ? vanilla : slots[i], config);
        h = lo.hidden;
        out.attention_probs.push_back(lo.attention_probs);
        if (lo.fusion_weights.defined()) out.fusion_weights.push_back(lo.fusion_weights);
    }
    const std::size_t b = batch.batch_size, l = batch.seq_len, hs = config.hidden_size;
    std::vector<std::size_t> cls_rows(b);
    for (std::size_t i = 0; i < b; ++i) cls_rows[i] = i * l;
    out.cls = gather_rows(reshape(h, {b * l, hs}), cls_rows);
    out.hidden = h;
    return out;
}

} // namespace fuseformer
