// Copyright (c) 2026, The Fuseformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "fuseformer/verify.hpp"

#include <random>

#include "fuseformer/heads.hpp"
#include "fuseformer/model.hpp"

namespace fuseformer {

std::string param_block(const std::string& name) {
    auto starts = [&](const char* p) { return name.rfind(p, 0) == 0; };
    if (starts("encoder.embeddings.")) return "embeddings";
    if (starts("encoder.layer.")) return name.find(".attention.") != std::string::npos ? "attention" : "feed_forward";
    if (starts("adapter.")) return "adapter";
    if (starts("fusion.")) return "fusion";
    if (starts("head.")) return "head";
    return "other";
}

FdReport check_model_gradients(const ModelConfig& config, const FdOptions& options, const GradHook& hook) {
    config.validate();
    std::vector<std::string> tokens;
    for (std::size_t i = Vocabulary::kNumSpecials; i < config.vocab_size; ++i) tokens.push_back("w" + std::to_string(i));
    Model model(config, Vocabulary::from_tokens(tokens));
    const TaskSpec task = task_from_id("emotion");
    model.init_encoder(options.seed + 1);
    model.add_adapter("a", options.seed + 2);
    model.add_adapter("b", options.seed + 3);
    model.add_fusion({"a", "b"}, options.seed + 4);
    model.add_head(task, options.seed + 5);

    std::mt19937_64 rng(options.seed ^ 0x5bd1e995ULL);
    std::normal_distribution<double> jitter(0.0, 0.05);
    std::vector<CheckedParam> params;
    for (const auto& e : model.params().entries()) {
        Tensor t = e.tensor;
        for (double& x : t.mutable_data()) x += jitter(rng);
        t.set_requires_grad(true);
        params.push_back({e.spec.name, param_block(e.spec.name), t});
    }

    // Two rows of different length so padding and masking are exercised.
    const std::size_t b = 2, l = std::min<std::size_t>(6, config.max_positions);
    Batch batch;
    batch.batch_size = b;
    batch.seq_len = l;
    std::uniform_int_distribution<std::size_t> tok(Vocabulary::kNumSpecials, config.vocab_size - 1);
    std::bernoulli_distribution coin(0.5);
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < l; ++j) {
            const bool real = i == 0 || j + 2 < l;
            batch.token_ids.push_back(j == 0 ? Vocabulary::kCls : real ? tok(rng) : Vocabulary::kPad);
            batch.attention_mask.push_back(real ? 1 : 0);
        }
    batch.segment_ids.assign(b * l, 0);
    for (std::size_t i = 0; i < b * num_labels(task.kind); ++i) batch.targets.push_back(coin(rng) ? 1.0 : 0.0);
    const std::vector<double> weights{0.9, 3.0, 3.8, 9.0, 4.9, 11.5};

    const SlotMode mode = SlotMode::fusion({"a", "b"});
    auto loss = [&] { return weighted_bce(model.forward(batch, mode, task.name).logits, batch.targets, weights); };
    return finite_difference_check(loss, params, options, hook);
}

} // namespace fuseformer
