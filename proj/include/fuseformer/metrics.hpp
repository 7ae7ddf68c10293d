// Copyright (c) 2026, The Fuseformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace fuseformer {

struct Confusion {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

    std::size_t total() const { return tp + fp + tn + fn; }
    bool operator==(const Confusion&) const = default;
};

Confusion confusion(std::span<const int> preds, std::span<const int> labels);

/// (tp + tn) / N; throws ContractError when N = 0.
double binary_accuracy(const Confusion& c);
/// 2tp / (2tp + fp + fn), 0 when the denominator is 0.
double f1_score(std::size_t tp, std::size_t fp, std::size_t fn);
double precision(const Confusion& c);
double recall(const Confusion& c);

double multiclass_accuracy(std::span<const int> preds, std::span<const int> labels, int num_classes = 7);

struct ClassMetrics {
    std::string name;
    double accuracy = 0;
    double precision = 0;
    double recall = 0;
    double f1 = 0;
    std::size_t support = 0; // positives of this class in the evaluated split
};

struct MetricsReport {
    std::string task_kind; // binary | multiclass7 | multilabel6
    std::string split;
    std::uint64_t seed = 0;
    std::size_t examples = 0;
    std::vector<ClassMetrics> classes;
    double mean_accuracy = 0; // unweighted mean of per-class accuracies
    double weighted_f1 = 0;   // per-class F1 weighted by positive support
    double accuracy = 0;      // exact-match rate (multiclass) or binary accuracy

    nlohmann::ordered_json to_json() const;
    static MetricsReport from_json(const nlohmann::json& j);
    /// Aligned text table: one A/F1 column per class plus Overall.
    std::string to_table() const;
};

/// Multi-label report over N×C logits with {0,1} labels; positive iff
/// σ(logit) ≥ threshold.
MetricsReport multilabel_report(std::span<const double> logits, std::span<const double> labels, std::size_t num_classes,
                                const std::vector<std::string>& class_names, double threshold = 0.5);
/// The six-emotion case of multilabel_report.
MetricsReport emotion_report(std::span<const double> logits, std::span<const double> labels, double threshold = 0.5);
MetricsReport multiclass_report(std::span<const double> logits, std::span<const int> labels, std::size_t num_classes);

/// Field-wise mean of several runs; classes must line up.
MetricsReport mean_report(const std::vector<MetricsReport>& runs);

} // namespace fuseformer
