// Copyright (c) 2026, The Fuseformer Authors
// SPDX-License-Identifier: Apache-2.0
//
// Post-LN BERT-style encoder: embeddings, multi-head self-attention, GELU
// feed-forward, residual Add & Norm, and a slot after the feed-forward
// sublayer where adapters or fusion attach.

#pragma once

#include <string>
#include <vector>

#include "fuseformer/data.hpp"
#include "fuseformer/params.hpp"
#include "fuseformer/tensor.hpp"

namespace fuseformer {

struct ModelConfig {
    std::size_t num_layers = 2;
    std::size_t hidden_size = 64;
    std::size_t num_heads = 4;
    std::size_t ff_size = 256;
    std::size_t vocab_size = 512;
    std::size_t max_positions = 32;
    std::size_t num_segments = 2;
    std::size_t reduction_factor = 16;
    double eps = 1e-12;

    /// Throws ConfigError when extents are zero or not divisible.
    void validate() const;
    std::size_t head_dim() const { return hidden_size / num_heads; }
    std::size_t bottleneck() const { return hidden_size / reduction_factor; }

    bool operator==(const ModelConfig&) const = default;
};

/// 12 layers, H=768, 12 heads, FF 3072, cased vocabulary of 28996 tokens.
ModelConfig reference_base_config();

Layout encoder_layout(const ModelConfig& config);

struct EncoderLayerParams {
    Tensor query_w, query_b, key_w, key_b, value_w, value_b, output_w, output_b;
    Tensor attn_norm_gamma, attn_norm_beta;
    Tensor ff_in_w, ff_in_b, ff_out_w, ff_out_b;
    Tensor ff_norm_gamma, ff_norm_beta;
};

struct EncoderParams {
    Tensor token, position, segment;
    Tensor norm_gamma, norm_beta;
    std::vector<EncoderLayerParams> layers;

    static EncoderParams bind(const ParamStore& store, const ModelConfig& config);
};

struct AdapterLayer {
    Tensor down_w, down_b, up_w, up_b;
};

struct FusionLayer {
    Tensor query, key, value;
};

enum class SlotKind { none, single, fusion };

/// What sits after the feed-forward sublayer of one encoder layer.
struct LayerSlot {
    SlotKind kind = SlotKind::none;
    std::vector<AdapterLayer> adapters; // one for single, T for fusion
    FusionLayer fusion;
};

/// Attention mask [B×L] with 1 on real tokens.
struct AttentionMask {
    std::size_t batch = 0;
    std::size_t length = 0;
    std::vector<int> values;
};

AttentionMask mask_of(const Batch& batch);

/// Sum of token, position and segment embeddings, then layer norm: [B×L×H].
Tensor embed(const Batch& batch, const EncoderParams& params, const ModelConfig& config);

struct AttentionOutput {
    Tensor output; // [B×L×H], before the residual
    Tensor probs;  // [B·heads × L × L]
};

AttentionOutput multi_head_attention(const Tensor& h, const AttentionMask& mask, const EncoderLayerParams& layer,
                                     const ModelConfig& config);

struct LayerOutput {
    Tensor hidden;
    Tensor attention_probs;
    Tensor fusion_weights; // defined only for fusion slots
};

LayerOutput encoder_layer_forward(const Tensor& h, const AttentionMask& mask, const EncoderLayerParams& layer,
                                  const LayerSlot& slot, const ModelConfig& config);

struct EncodeOutput {
    Tensor hidden; // [B×L×H]
    Tensor cls;    // [B×H]
    std::vector<Tensor> attention_probs;
    std::vector<Tensor> fusion_weights;
};

/// `slots` must hold one entry per layer, or be empty for a vanilla encoder.
EncodeOutput encode(const Batch& batch, const EncoderParams& params, const std::vector<LayerSlot>& slots,
                    const ModelConfig& config);

} // namespace fuseformer
