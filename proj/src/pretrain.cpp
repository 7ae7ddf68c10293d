// Copyright (c) 2026, The Fuseformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "fuseformer/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fuseformer/checkpoint.hpp"
#include "fuseformer/errors.hpp"
#include "fuseformer/heads.hpp"
#include "fuseformer/optim.hpp"

namespace fuseformer {

void PretrainConfig::validate() const {
    model.validate();
    if (!(lr > 0) || !std::isfinite(lr)) throw ConfigError("pretrain lr must be positive");
    if (!(weight_decay >= 0)) throw ConfigError("pretrain weight_decay must be non-negative");
    if (batch_size == 0) throw ConfigError("pretrain batch_size must be positive");
    if (max_len < 2 || max_len > model.max_positions) throw ConfigError("pretrain max_len out of range");
}

nlohmann::ordered_json PretrainConfig::to_json() const {
    nlohmann::ordered_json j;
    j["model"] = model_config_to_json(model);
    j["epochs"] = epochs;
    j["lr"] = lr;
    j["weight_decay"] = weight_decay;
    j["batch_size"] = batch_size;
    j["max_len"] = max_len;
    j["seed"] = seed;
    return j;
}

Model pretrain_encoder(const Corpus& corpus, const Vocabulary& vocab, const PretrainConfig& config,
                       PretrainResult* result) {
    config.validate();
    Model model(config.model, vocab);
    model.init_encoder(config.seed);
    if (config.epochs == 0) return model;
    if (corpus.empty()) throw ConfigError("pretraining needs a non-empty corpus");

    const std::size_t v = vocab.size(), h = config.model.hidden_size;
    ParamStore bow;
    bow.allocate({{"pretrain.bow.weight", {h, v}, "pretrain", true, InitKind::normal},
                  {"pretrain.bow.bias", {v}, "pretrain", false, InitKind::zeros}},
                 config.seed);
    model.params().set_trainable([](const std::string& g) { return g == "encoder"; });
    bow.set_trainable([](const std::string&) { return true; });
    auto params = model.params().trainable();
    for (const auto& e : bow.trainable()) params.push_back(e);

    std::vector<Tokenized> rows;
    rows.reserve(corpus.size());
    for (const auto& ex : corpus) rows.push_back(tokenize(ex.text, vocab, config.max_len));

    AdamW opt({config.weight_decay, 0.9, 0.999, 1e-8});
    const std::size_t n = rows.size();
    const std::size_t per_epoch = (n + config.batch_size - 1) / config.batch_size;
    const std::size_t total = per_epoch * config.epochs;
    std::size_t step = 0;
    std::mt19937_64 rng(config.seed ^ 0xa0761d6478bd642fULL);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    const EncoderParams enc = EncoderParams::bind(model.params(), config.model);

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0;
        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::size_t len = std::min(config.batch_size, n - start);
            Batch b;
            b.batch_size = len;
            for (std::size_t k = 0; k < len; ++k) {
                const auto& m = rows[order[start + k]].mask;
                b.seq_len = std::max<std::size_t>(b.seq_len, static_cast<std::size_t>(std::count(m.begin(), m.end(), 1)));
            }
            std::vector<double> targets(len * v, 0.0);
            for (std::size_t k = 0; k < len; ++k) {
                const auto& r = rows[order[start + k]];
                for (std::size_t j = 0; j < b.seq_len; ++j) {
                    b.token_ids.push_back(r.ids[j]);
                    b.attention_mask.push_back(r.mask[j]);
                    if (r.mask[j] && r.ids[j] >= Vocabulary::kNumSpecials) targets[k * v + r.ids[j]] = 1.0;
                }
            }
            b.segment_ids.assign(b.token_ids.size(), 0);

            for (auto& p : params) p.tensor.zero_grad();
            const Tensor cls = encode(b, enc, {}, config.model).cls;
            const Tensor loss = bce(linear(cls, bow.at("pretrain.bow.weight"), bow.at("pretrain.bow.bias")), targets);
            if (!std::isfinite(loss.item())) throw DivergenceError("non-finite pretraining loss at step " + std::to_string(step));
            backward(loss);
            opt.step(params, lr_schedule(step++, total, config.lr));
            loss_sum += loss.item();
        }
        if (result) result->epoch_losses.push_back(loss_sum / static_cast<double>(per_epoch));
    }
    for (auto& e : model.params().entries()) {
        Tensor t = e.tensor;
        t.set_requires_grad(false);
        t.zero_grad();
        round_to_f32(t.mutable_data());
    }
    return model;
}

} // namespace fuseformer
