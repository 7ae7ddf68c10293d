// Copyright (c) 2026, The Fuseformer Authors
// SPDX-License-Identifier: Apache-2.0
//
// Classification heads and the training losses: plain BCE, positive-weighted
// BCE, multi-label focal loss and K-way cross-entropy.

#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fuseformer/data.hpp"
#include "fuseformer/encoder.hpp"
#include "fuseformer/params.hpp"

namespace fuseformer {

/// linear1 [H×H] + bias, linear2 [H×num_labels] + bias.
Layout head_layout(const ModelConfig& config, const std::string& task, std::size_t num_labels);

struct HeadParams {
    std::string task;
    std::size_t num_labels = 0;
    Tensor w1, b1, w2, b2;

    static HeadParams bind(const ParamStore& store, const std::string& task);
};

/// tanh(cls·W1 + b1)·W2 + b2 -> [B×num_labels]
Tensor head_forward(const Tensor& cls, const HeadParams& head);

struct PosWeights {
    std::vector<double> w;
    std::vector<std::string> warnings;
};

/// w_c = negatives_c / positives_c from training-split statistics. A class
/// with no positives gets the split size as its weight and a warning.
PosWeights pos_weights(const ClassStats& stats);

enum class Reduction {
    batch_mean, // sum over classes, mean over the batch
    sum,        // literal double sum
};

Reduction parse_reduction(std::string_view name);
std::string reduction_name(Reduction r);

/// Σ_n Σ_c −[w_c·y·log σ(x) + (1−y)·log(1−σ(x))] via stable log-sigmoid.
Tensor weighted_bce(const Tensor& logits, std::span<const double> targets, std::span<const double> weights,
                    Reduction reduction = Reduction::batch_mean);
Tensor bce(const Tensor& logits, std::span<const double> targets, Reduction reduction = Reduction::batch_mean);

/// −α_t (1−p_t)^γ log p_t per element, same reduction as weighted_bce.
/// α_t = α for positives and 1−α for negatives when α is given, else 1.
Tensor focal_multilabel(const Tensor& logits, std::span<const double> targets, double gamma = 2.0,
                        std::optional<double> alpha = std::nullopt, Reduction reduction = Reduction::batch_mean);

/// Mean over the batch of −log softmax(logits)[target] (sum with Reduction::sum).
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets, Reduction reduction = Reduction::batch_mean);

} // namespace fuseformer
