// Copyright (c) 2026, The Fuseformer Authors
// SPDX-License-Identifier: Apache-2.0
//
// A model instance: encoder, named task adapters, an optional fusion layer
// and per-task heads, all held in one ParamStore, plus the vocabulary the
// encoder was built for.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fuseformer/adapters.hpp"
#include "fuseformer/checkpoint.hpp"
#include "fuseformer/data.hpp"
#include "fuseformer/encoder.hpp"
#include "fuseformer/params.hpp"

namespace fuseformer {

nlohmann::ordered_json model_config_to_json(const ModelConfig& config);
/// Missing keys keep their defaults; unknown keys are a ConfigError.
ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {});

class Model {
  public:
    Model(ModelConfig config, Vocabulary vocab);
    Model(Model&&) = default;
    Model& operator=(Model&&) = default;
    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;

    /// The encoder stands in for pretrained weights, so its seed is fixed per
    /// experiment rather than per run.
    void init_encoder(std::uint64_t seed);
    void add_adapter(const std::string& task, std::uint64_t seed);
    void add_fusion(std::vector<std::string> tasks, std::uint64_t seed);
    void add_head(const TaskSpec& task, std::uint64_t seed);

    const ModelConfig& config() const { return config_; }
    const Vocabulary& vocab() const { return vocab_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    const std::vector<std::string>& adapters() const { return adapters_; }
    const std::vector<std::string>& fusion_tasks() const { return fusion_tasks_; }
    const std::map<std::string, TaskSpec>& heads() const { return heads_; }
    const TaskSpec& head(const std::string& name) const;

    /// Single mode on the head's own adapter, fusion mode when a fusion layer
    /// exists, otherwise the bare encoder.
    SlotMode default_mode(const std::string& head) const;

    struct Forward {
        Tensor logits; // [B×num_labels]
        EncodeOutput encoded;
    };
    Forward forward(const Batch& batch, const SlotMode& mode, const std::string& head) const;

    /// All parameters plus a metadata snapshot; `extra` keys are merged into
    /// the metadata (stage, seed, training config).
    Checkpoint to_checkpoint(const nlohmann::json& extra = nlohmann::json::object()) const;
    static Model from_checkpoint(const Checkpoint& ckpt);
    /// Only the encoder (and vocabulary) of a checkpoint; adapters, fusion
    /// and heads are dropped.
    static Model encoder_from_checkpoint(const Checkpoint& ckpt);

    /// Copies the adapters of another checkpoint into this model. Its encoder
    /// configuration, vocabulary and encoder weights must match exactly.
    std::vector<std::string> import_adapters(const Checkpoint& ckpt);

  private:
    ModelConfig config_;
    Vocabulary vocab_;
    ParamStore params_;
    bool has_encoder_ = false;
    std::vector<std::string> adapters_;
    std::vector<std::string> fusion_tasks_;
    std::map<std::string, TaskSpec> heads_;
};

/// Vocabulary stored in a checkpoint's metadata.
Vocabulary checkpoint_vocab(const Checkpoint& ckpt);
ModelConfig checkpoint_model_config(const Checkpoint& ckpt);

} // namespace fuseformer
