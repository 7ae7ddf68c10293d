// Copyright (c) 2026, The Fuseformer Authors
// SPDX-License-Identifier: Apache-2.0
//
// Stand-in for a pretrained encoder. A freshly initialized encoder puts so
// little sentence content into [CLS] that frozen-encoder adapter training
// barely moves at desk scale. This stage trains the encoder, without labels,
// to predict from [CLS] which vocabulary tokens occur in the sentence; a
// throwaway linear projection carries the prediction and is discarded.

#pragma once

#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "fuseformer/data.hpp"
#include "fuseformer/model.hpp"

namespace fuseformer {

struct PretrainConfig {
    ModelConfig model;
    std::size_t epochs = 4; // 0 keeps the random initialization
    double lr = 1e-3;
    double weight_decay = 1e-2;
    std::size_t batch_size = 32;
    std::size_t max_len = 32;
    std::uint64_t seed = 1234;

    void validate() const;
    nlohmann::ordered_json to_json() const;
};

struct PretrainResult {
    std::vector<double> epoch_losses;
};

/// Initializes an encoder from `config.seed` and trains it on the texts of
/// `corpus`. The returned model holds only the encoder.
Model pretrain_encoder(const Corpus& corpus, const Vocabulary& vocab, const PretrainConfig& config,
                       PretrainResult* result = nullptr);

} // namespace fuseformer
