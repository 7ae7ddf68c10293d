// Copyright (c) 2026, The Fuseformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "fuseformer/model.hpp"

#include <algorithm>
#include <set>

#include "fuseformer/errors.hpp"
#include "fuseformer/heads.hpp"

namespace fuseformer {

namespace {

constexpr const char* kFormat = "fuseformer-1";

const nlohmann::json& meta_field(const Checkpoint& ckpt, const char* key) {
    if (!ckpt.meta.is_object() || !ckpt.meta.contains(key))
        throw LoadError(std::string("checkpoint metadata lacks '") + key + "'");
    return ckpt.meta.at(key);
}

void check_name(const std::string& name, const char* what) {
    if (name.empty() || name.find_first_of(". \t\n") != std::string::npos)
        throw ConfigError(std::string(what) + " name '" + name + "' must be non-empty without dots or spaces");
}

} // namespace

nlohmann::ordered_json model_config_to_json(const ModelConfig& c) {
    nlohmann::ordered_json j;
    j["num_layers"] = c.num_layers;
    j["hidden_size"] = c.hidden_size;
    j["num_heads"] = c.num_heads;
    j["ff_size"] = c.ff_size;
    j["vocab_size"] = c.vocab_size;
    j["max_positions"] = c.max_positions;
    j["num_segments"] = c.num_segments;
    j["reduction_factor"] = c.reduction_factor;
    j["eps"] = c.eps;
    return j;
}

ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig c) {
    if (!j.is_object()) throw ConfigError("model config must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        try {
            if (key == "num_layers") c.num_layers = value.get<std::size_t>();
            else if (key == "hidden_size") c.hidden_size = value.get<std::size_t>();
            else if (key == "num_heads") c.num_heads = value.get<std::size_t>();
            else if (key == "ff_size") c.ff_size = value.get<std::size_t>();
            else if (key == "vocab_size") c.vocab_size = value.get<std::size_t>();
            else if (key == "max_positions") c.max_positions = value.get<std::size_t>();
            else if (key == "num_segments") c.num_segments = value.get<std::size_t>();
            else if (key == "reduction_factor") c.reduction_factor = value.get<std::size_t>();
            else if (key == "eps") c.eps = value.get<double>();
            else throw ConfigError("unknown model config key '" + key + "'");
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("model config key '" + key + "': " + e.what());
        }
    }
    c.validate();
    return c;
}

Model::Model(ModelConfig config, Vocabulary vocab) : config_(config), vocab_(std::move(vocab)) {
    config_.validate();
    if (vocab_.size() > config_.vocab_size)
        throw ConfigError("vocabulary of " + std::to_string(vocab_.size()) + " tokens exceeds vocab_size " +
                          std::to_string(config_.vocab_size));
}

void Model::init_encoder(std::uint64_t seed) {
    if (has_encoder_) throw ContractError("encoder already initialized");
    params_.allocate(encoder_layout(config_), seed);
    has_encoder_ = true;
}

void Model::add_adapter(const std::string& task, std::uint64_t seed) {
    check_name(task, "adapter");
    if (std::find(adapters_.begin(), adapters_.end(), task) != adapters_.end())
        throw ConfigError("duplicate adapter '" + task + "'");
    params_.allocate(adapter_layout(config_, task), seed);
    adapters_.push_back(task);
}

void Model::add_fusion(std::vector<std::string> tasks, std::uint64_t seed) {
    if (!fusion_tasks_.empty()) throw ContractError("model already has a fusion layer");
    if (tasks.empty()) throw ConfigError("fusion needs at least one adapter");
    for (const auto& t : tasks)
        if (std::find(adapters_.begin(), adapters_.end(), t) == adapters_.end())
            throw ConfigError("fusion over unknown adapter '" + t + "'");
    params_.allocate(fusion_layout(config_), seed);
    fusion_tasks_ = std::move(tasks);
}

void Model::add_head(const TaskSpec& task, std::uint64_t seed) {
    check_name(task.name, "head");
    if (heads_.count(task.name)) throw ConfigError("duplicate head '" + task.name + "'");
    params_.allocate(head_layout(config_, task.name, num_labels(task.kind)), seed);
    heads_.emplace(task.name, task);
}

const TaskSpec& Model::head(const std::string& name) const {
    auto it = heads_.find(name);
    if (it == heads_.end()) throw ConfigError("model has no head '" + name + "'");
    return it->second;
}

SlotMode Model::default_mode(const std::string& head) const {
    if (!fusion_tasks_.empty()) return SlotMode::fusion(fusion_tasks_);
    if (std::find(adapters_.begin(), adapters_.end(), head) != adapters_.end()) return SlotMode::single(head);
    return SlotMode::none();
}

Model::Forward Model::forward(const Batch& batch, const SlotMode& mode, const std::string& head) const {
    if (!has_encoder_) throw ContractError("forward before encoder initialization");
    for (auto id : batch.token_ids)
        if (id >= config_.vocab_size) throw ContractError("token id " + std::to_string(id) + " outside vocabulary");
    Forward out;
    const auto slots = attach(params_, config_, mode);
    out.encoded = encode(batch, EncoderParams::bind(params_, config_), slots, config_);
    out.logits = head_forward(out.encoded.cls, HeadParams::bind(params_, this->head(head).name));
    return out;
}

Checkpoint Model::to_checkpoint(const nlohmann::json& extra) const {
    Checkpoint ckpt;
    ckpt.meta = nlohmann::json::object();
    ckpt.meta["format"] = kFormat;
    ckpt.meta["model"] = model_config_to_json(config_);
    ckpt.meta["vocab"] = vocab_.regular_tokens();
    ckpt.meta["encoder"] = has_encoder_;
    ckpt.meta["adapters"] = adapters_;
    ckpt.meta["fusion_tasks"] = fusion_tasks_;
    nlohmann::json heads = nlohmann::json::object();
    for (const auto& [name, task] : heads_) heads[name] = task_id(task);
    ckpt.meta["heads"] = heads;
    for (const auto& [k, v] : extra.items()) ckpt.meta[k] = v;
    ckpt.tensors = snapshot(params_);
    return ckpt;
}

Vocabulary checkpoint_vocab(const Checkpoint& ckpt) {
    try {
        return Vocabulary::from_tokens(meta_field(ckpt, "vocab").get<std::vector<std::string>>());
    } catch (const nlohmann::json::exception& e) {
        throw LoadError(std::string("checkpoint vocabulary: ") + e.what());
    } catch (const ContractError& e) {
        throw LoadError(std::string("checkpoint vocabulary: ") + e.what());
    }
}

ModelConfig checkpoint_model_config(const Checkpoint& ckpt) {
    try {
        return model_config_from_json(meta_field(ckpt, "model"));
    } catch (const ConfigError& e) {
        throw LoadError(std::string("checkpoint model config: ") + e.what());
    }
}

Model Model::from_checkpoint(const Checkpoint& ckpt) {
    if (!ckpt.meta.is_object() || ckpt.meta.value("format", "") != kFormat)
        throw LoadError("checkpoint metadata missing or of unknown format");
    Model m(checkpoint_model_config(ckpt), checkpoint_vocab(ckpt));
    try {
        if (meta_field(ckpt, "encoder").get<bool>()) m.init_encoder(0);
        for (const auto& a : meta_field(ckpt, "adapters").get<std::vector<std::string>>()) m.add_adapter(a, 0);
        const auto fusion = meta_field(ckpt, "fusion_tasks").get<std::vector<std::string>>();
        if (!fusion.empty()) m.add_fusion(fusion, 0);
        for (const auto& [name, id] : meta_field(ckpt, "heads").items())
            m.add_head(task_from_id(id.get<std::string>(), name), 0);
    } catch (const nlohmann::json::exception& e) {
        throw LoadError(std::string("checkpoint metadata: ") + e.what());
    } catch (const ConfigError& e) {
        throw LoadError(std::string("checkpoint metadata: ") + e.what());
    }

    std::set<std::string> stored;
    for (const auto& t : ckpt.tensors) stored.insert(t.name);
    for (const auto& e : m.params_.entries())
        if (!stored.count(e.spec.name)) throw LoadError("checkpoint lacks parameter '" + e.spec.name + "'");
    restore(m.params_, ckpt.tensors);
    return m;
}

Model Model::encoder_from_checkpoint(const Checkpoint& ckpt) {
    Model m(checkpoint_model_config(ckpt), checkpoint_vocab(ckpt));
    m.init_encoder(0);
    std::vector<StoredTensor> tensors;
    for (const auto& e : m.params_.entries()) {
        const StoredTensor* t = ckpt.find(e.spec.name);
        if (!t) throw LoadError("checkpoint lacks encoder parameter '" + e.spec.name + "'");
        tensors.push_back(*t);
    }
    restore(m.params_, tensors);
    return m;
}

std::vector<std::string> Model::import_adapters(const Checkpoint& ckpt) {
    if (!has_encoder_) throw ContractError("import_adapters before encoder initialization");
    const ModelConfig other = checkpoint_model_config(ckpt);
    if (!(other == config_))
        throw LoadError("adapter checkpoint encoder config differs (hidden " + std::to_string(other.hidden_size) +
                        " vs " + std::to_string(config_.hidden_size) + ", layers " +
                        std::to_string(other.num_layers) + " vs " + std::to_string(config_.num_layers) + ")");
    if (!(checkpoint_vocab(ckpt) == vocab_)) throw LoadError("adapter checkpoint was built with another vocabulary");
    for (const auto& e : params_.group("encoder")) {
        const StoredTensor* t = ckpt.find(e.spec.name);
        if (!t) throw LoadError("adapter checkpoint lacks encoder parameter '" + e.spec.name + "'");
        const auto d = e.tensor.data();
        if (t->shape != e.tensor.shape() || !std::equal(d.begin(), d.end(), t->values.begin()))
            throw LoadError("adapter checkpoint encoder differs at '" + e.spec.name + "'");
    }

    std::vector<std::string> names;
    try {
        names = meta_field(ckpt, "adapters").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw LoadError(std::string("checkpoint metadata: ") + e.what());
    }
    for (const auto& a : names) {
        if (std::find(adapters_.begin(), adapters_.end(), a) != adapters_.end())
            throw ConfigError("adapter '" + a + "' supplied twice");
        std::vector<StoredTensor> tensors;
        for (const auto& spec : adapter_layout(config_, a)) {
            const StoredTensor* t = ckpt.find(spec.name);
            if (!t) throw LoadError("adapter checkpoint lacks '" + spec.name + "'");
            tensors.push_back(*t);
        }
        add_adapter(a, 0);
        restore(params_, tensors);
    }
    return names;
}

} // namespace fuseformer
