// Copyright (c) 2026, The Fuseformer Authors
// SPDX-License-Identifier: Apache-2.0
//
// Training configuration, dataset encoding and batching, the two training
// stages with early stopping, evaluation, and seeded multi-run experiments.

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fuseformer/data.hpp"
#include "fuseformer/heads.hpp"
#include "fuseformer/metrics.hpp"
#include "fuseformer/model.hpp"

namespace fuseformer {

enum class LossKind { bce, weighted_bce, focal };

LossKind parse_loss(std::string_view name);
std::string loss_name(LossKind kind);

struct TrainConfig {
    ModelConfig model;
    double lr = 1e-5;
    double weight_decay = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::size_t epochs = 10;
    std::size_t patience = 3;
    std::size_t batch_size = 32;
    std::uint64_t seed = 42;
    std::uint64_t encoder_seed = 1234;
    /// Used only when no encoder checkpoint is supplied.
    std::size_t pretrain_epochs = 4;
    double pretrain_lr = 1e-3;
    std::size_t runs = 3;
    LossKind loss = LossKind::weighted_bce;
    std::string metric_for_early_stop = "auto"; // auto | weighted_f1 | mean_accuracy | accuracy
    std::size_t warmup_steps = 0;
    Reduction loss_reduction = Reduction::batch_mean;
    double threshold = 0.5;
    std::size_t max_len = 32;
    double focal_gamma = 2.0;
    std::optional<double> focal_alpha;

    /// Throws ConfigError on non-positive lr/epochs/patience, patience >
    /// epochs, and similar inconsistencies.
    void validate() const;
    nlohmann::ordered_json to_json() const;
    /// Overlays the keys of `j` onto `base`; unknown keys are a ConfigError.
    static TrainConfig from_json(const nlohmann::json& j, TrainConfig base);
    static TrainConfig from_json(const nlohmann::json& j);
    static TrainConfig load(const std::filesystem::path& path);
};

/// One split tokenized for one task.
struct EncodedSplit {
    TaskSpec task;
    std::vector<Tokenized> rows;
    std::vector<double> targets; // [N×C] for sigmoid heads
    std::vector<int> class_ids;  // [N] for the 7-way head
    ClassStats stats;

    std::size_t size() const { return rows.size(); }
};

EncodedSplit encode_split(const Corpus& corpus, const TaskSpec& task, const Vocabulary& vocab, std::size_t max_len);
/// Rows at `indices`, padded to the longest of them.
Batch make_batch(const EncodedSplit& split, std::span<const std::size_t> indices);

struct Splits {
    EncodedSplit train, valid, test;
};

struct CorpusSplits {
    Corpus train, valid, test;
};

/// Deterministic 80/10/10 partition for corpora without predefined splits.
CorpusSplits carve_splits(const Corpus& corpus, std::uint64_t seed);
Splits encode_splits(const CorpusSplits& corpora, const TaskSpec& task, const Vocabulary& vocab, std::size_t max_len);

struct LossSettings {
    LossKind kind = LossKind::weighted_bce;
    std::vector<double> pos_weights;
    Reduction reduction = Reduction::batch_mean;
    double focal_gamma = 2.0;
    std::optional<double> focal_alpha;
};

/// Sigmoid heads use the configured loss; the 7-way head always uses
/// cross-entropy.
Tensor task_loss(const Tensor& logits, const Batch& batch, const TaskSpec& task, const LossSettings& settings);

/// Called on every evaluated batch.
using EvalObserver = std::function<void(const Model::Forward&, const Batch&)>;

MetricsReport evaluate(const Model& model, const SlotMode& mode, const std::string& head, const EncodedSplit& split,
                       double threshold, std::size_t batch_size, const EvalObserver& observer = {});

/// auto resolves to weighted F1 for the emotion task and accuracy otherwise.
std::string resolve_early_stop_metric(const TrainConfig& config, const TaskSpec& task);
double report_metric(const MetricsReport& report, const std::string& metric);

struct EpochRecord {
    std::size_t epoch = 0; // 1-based
    double train_loss = 0; // mean of batch losses
    double valid_metric = 0;
    bool improved = false;
};

struct TrainResult {
    std::string stage;
    std::uint64_t seed = 0;
    std::string early_stop_metric;
    std::vector<double> pos_weights;
    std::vector<std::string> warnings;
    std::vector<EpochRecord> history;
    std::vector<double> step_losses;
    std::size_t best_epoch = 0;
    double best_metric = 0;
    bool stopped_early = false;
    std::size_t trainable_params = 0;
    std::size_t total_params = 0;
    std::string frozen_hash_before;
    std::string frozen_hash_after;
    MetricsReport valid;
    MetricsReport test;

    bool frozen_ok() const { return frozen_hash_before == frozen_hash_after; }
    nlohmann::ordered_json to_json() const;
};

/// Trains the groups selected by `stage` with AdamW on a linear schedule,
/// keeps the parameters of the best validation epoch, rounds them to f32 and
/// evaluates on valid and test. Throws ConfigError on empty splits and
/// DivergenceError on a non-finite loss.
TrainResult train_stage(Model& model, const SlotMode& mode, const Stage& stage, const TaskSpec& task,
                        const Splits& splits, const TrainConfig& config, std::uint64_t seed,
                        const EvalObserver& observer = {});

struct StageOutcome {
    Model model;
    TrainResult result;
};

/// Stage 1: fresh adapter and head on the frozen encoder of `encoder`
/// (whose model config and vocabulary override those of `config`).
StageOutcome train_adapter(const TaskSpec& task, const Splits& splits, const Checkpoint& encoder,
                           const TrainConfig& config, std::uint64_t seed, const EvalObserver& observer = {});

/// Stage 2: fusion over the adapters of `adapter_checkpoints` plus a new
/// head for `target`. The encoder and vocabulary come from the first
/// checkpoint; every other checkpoint must match them exactly (LoadError).
StageOutcome train_fusion(const TaskSpec& target, const std::vector<Checkpoint>& adapter_checkpoints,
                          const Splits& splits, const TrainConfig& config, std::uint64_t seed,
                          const EvalObserver& observer = {});

struct RunOutcome {
    std::uint64_t seed = 0;
    TrainResult result;
    Checkpoint checkpoint;
};

struct ExperimentResult {
    std::vector<RunOutcome> runs;
    MetricsReport aggregate; // field-wise mean of the runs' test reports
};

/// Runs `runs` replicas with seeds base_seed + i, at most `max_threads` at a
/// time. Results are ordered by run index regardless of completion order.
ExperimentResult run_experiment(std::size_t runs, std::uint64_t base_seed,
                                const std::function<RunOutcome(std::uint64_t seed)>& run, std::size_t max_threads = 1);

/// FUSEFORMER_THREADS when set to a positive integer, else 1.
std::size_t threads_from_env();

} // namespace fuseformer
