// Copyright (c) 2026, The Fuseformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "fuseformer/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <thread>

#include "fuseformer/checkpoint.hpp"
#include "fuseformer/errors.hpp"
#include "fuseformer/optim.hpp"

namespace fuseformer {

namespace {

const char* const kMetrics[] = {"auto", "weighted_f1", "mean_accuracy", "accuracy"};

template <class T>
T json_get(const nlohmann::json& v, const std::string& key) {
    try {
        return v.get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config key '" + key + "': " + e.what());
    }
}

} // namespace

LossKind parse_loss(std::string_view name) {
    if (name == "bce") return LossKind::bce;
    if (name == "weighted_bce") return LossKind::weighted_bce;
    if (name == "focal") return LossKind::focal;
    throw ConfigError("unknown loss '" + std::string(name) + "' (expected bce, weighted_bce or focal)");
}

std::string loss_name(LossKind kind) {
    switch (kind) {
    case LossKind::bce: return "bce";
    case LossKind::weighted_bce: return "weighted_bce";
    case LossKind::focal: return "focal";
    }
    return "?";
}

// ---- TrainConfig ------------------------------------------------------------------

void TrainConfig::validate() const {
    model.validate();
    if (!(lr > 0) || !std::isfinite(lr)) throw ConfigError("lr must be positive");
    if (!(weight_decay >= 0)) throw ConfigError("weight_decay must be non-negative");
    if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw ConfigError("betas must lie in [0, 1)");
    if (!(adam_eps > 0)) throw ConfigError("adam_eps must be positive");
    if (epochs == 0) throw ConfigError("epochs must be positive");
    if (patience == 0) throw ConfigError("patience must be positive");
    if (patience > epochs) throw ConfigError("patience must not exceed epochs");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (runs == 0) throw ConfigError("runs must be at least 1");
    if (!(threshold > 0 && threshold < 1)) throw ConfigError("threshold must lie in (0, 1)");
    if (max_len < 2 || max_len > model.max_positions)
        throw ConfigError("max_len must lie in [2, max_positions=" + std::to_string(model.max_positions) + "]");
    if (std::find(std::begin(kMetrics), std::end(kMetrics), metric_for_early_stop) == std::end(kMetrics))
        throw ConfigError("unknown metric_for_early_stop '" + metric_for_early_stop + "'");
    if (!(focal_gamma >= 0)) throw ConfigError("focal_gamma must be non-negative");
    if (!(pretrain_lr > 0)) throw ConfigError("pretrain_lr must be positive");
    if (focal_alpha && !(*focal_alpha >= 0 && *focal_alpha <= 1)) throw ConfigError("focal_alpha must lie in [0, 1]");
}

nlohmann::ordered_json TrainConfig::to_json() const {
    nlohmann::ordered_json j;
    j["model"] = model_config_to_json(model);
    j["lr"] = lr;
    j["weight_decay"] = weight_decay;
    j["betas"] = {beta1, beta2};
    j["adam_eps"] = adam_eps;
    j["epochs"] = epochs;
    j["patience"] = patience;
    j["batch_size"] = batch_size;
    j["seed"] = seed;
    j["encoder_seed"] = encoder_seed;
    j["pretrain_epochs"] = pretrain_epochs;
    j["pretrain_lr"] = pretrain_lr;
    j["runs"] = runs;
    j["loss"] = loss_name(loss);
    j["metric_for_early_stop"] = metric_for_early_stop;
    j["warmup_steps"] = warmup_steps;
    j["loss_reduction"] = reduction_name(loss_reduction);
    j["threshold"] = threshold;
    j["max_len"] = max_len;
    j["focal_gamma"] = focal_gamma;
    j["focal_alpha"] = focal_alpha ? nlohmann::ordered_json(*focal_alpha) : nlohmann::ordered_json();
    return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j, TrainConfig c) {
    if (!j.is_object()) throw ConfigError("training config must be a JSON object");
    for (const auto& [key, v] : j.items()) {
        if (key == "model") c.model = model_config_from_json(v, c.model);
        else if (key == "lr") c.lr = json_get<double>(v, key);
        else if (key == "weight_decay") c.weight_decay = json_get<double>(v, key);
        else if (key == "betas") {
            const auto b = json_get<std::vector<double>>(v, key);
            if (b.size() != 2) throw ConfigError("betas must have two entries");
            c.beta1 = b[0];
            c.beta2 = b[1];
        } else if (key == "adam_eps") c.adam_eps = json_get<double>(v, key);
        else if (key == "epochs") c.epochs = json_get<std::size_t>(v, key);
        else if (key == "patience") c.patience = json_get<std::size_t>(v, key);
        else if (key == "batch_size") c.batch_size = json_get<std::size_t>(v, key);
        else if (key == "seed") c.seed = json_get<std::uint64_t>(v, key);
        else if (key == "encoder_seed") c.encoder_seed = json_get<std::uint64_t>(v, key);
        else if (key == "pretrain_epochs") c.pretrain_epochs = json_get<std::size_t>(v, key);
        else if (key == "pretrain_lr") c.pretrain_lr = json_get<double>(v, key);
        else if (key == "runs") c.runs = json_get<std::size_t>(v, key);
        else if (key == "loss") c.loss = parse_loss(json_get<std::string>(v, key));
        else if (key == "metric_for_early_stop") c.metric_for_early_stop = json_get<std::string>(v, key);
        else if (key == "warmup_steps") c.warmup_steps = json_get<std::size_t>(v, key);
        else if (key == "loss_reduction") c.loss_reduction = parse_reduction(json_get<std::string>(v, key));
        else if (key == "threshold") c.threshold = json_get<double>(v, key);
        else if (key == "max_len") c.max_len = json_get<std::size_t>(v, key);
        else if (key == "focal_gamma") c.focal_gamma = json_get<double>(v, key);
        else if (key == "focal_alpha") {
            if (v.is_null()) c.focal_alpha.reset();
            else c.focal_alpha = json_get<double>(v, key);
        } else throw ConfigError("unknown training config key '" + key + "'");
    }
    c.validate();
    return c;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) { return from_json(j, TrainConfig{}); }

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return from_json(j);
}

// ---- data ---------------------------------------------------------------------------

EncodedSplit encode_split(const Corpus& corpus, const TaskSpec& task, const Vocabulary& vocab, std::size_t max_len) {
    EncodedSplit s;
    s.task = task;
    s.stats = class_statistics(corpus, task);
    s.rows.reserve(corpus.size());
    for (const auto& ex : corpus) {
        s.rows.push_back(tokenize(ex.text, vocab, max_len));
        if (task.kind == TaskKind::multiclass7) {
            s.class_ids.push_back(class_id(ex, task));
        } else {
            const auto t = binary_targets(ex, task);
            s.targets.insert(s.targets.end(), t.begin(), t.end());
        }
    }
    return s;
}

Batch make_batch(const EncodedSplit& split, std::span<const std::size_t> indices) {
    if (indices.empty()) throw ContractError("make_batch: no rows");
    Batch b;
    b.batch_size = indices.size();
    for (auto i : indices) {
        if (i >= split.size()) throw ContractError("make_batch: row index out of range");
        const auto& m = split.rows[i].mask;
        b.seq_len = std::max<std::size_t>(b.seq_len, static_cast<std::size_t>(std::count(m.begin(), m.end(), 1)));
    }
    const std::size_t c = split.task.kind == TaskKind::multiclass7 ? 0 : num_labels(split.task.kind);
    b.token_ids.reserve(b.batch_size * b.seq_len);
    for (auto i : indices) {
        const auto& r = split.rows[i];
        b.token_ids.insert(b.token_ids.end(), r.ids.begin(), r.ids.begin() + static_cast<std::ptrdiff_t>(b.seq_len));
        b.attention_mask.insert(b.attention_mask.end(), r.mask.begin(),
                                r.mask.begin() + static_cast<std::ptrdiff_t>(b.seq_len));
        if (c > 0) {
            const auto* t = split.targets.data() + i * c;
            b.targets.insert(b.targets.end(), t, t + c);
        } else {
            b.class_ids.push_back(split.class_ids[i]);
        }
    }
    b.segment_ids.assign(b.token_ids.size(), 0);
    return b;
}

CorpusSplits carve_splits(const Corpus& corpus, std::uint64_t seed) {
    if (corpus.size() < 3) throw ConfigError("corpus too small to carve train/valid/test splits");
    std::vector<std::size_t> order(corpus.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t n_eval = std::max<std::size_t>(1, corpus.size() / 10);
    CorpusSplits out;
    for (std::size_t k = 0; k < order.size(); ++k) {
        auto& dst = k < n_eval ? out.valid : k < 2 * n_eval ? out.test : out.train;
        dst.push_back(corpus[order[k]]);
    }
    return out;
}

Splits encode_splits(const CorpusSplits& c, const TaskSpec& task, const Vocabulary& vocab, std::size_t max_len) {
    return {encode_split(c.train, task, vocab, max_len), encode_split(c.valid, task, vocab, max_len),
            encode_split(c.test, task, vocab, max_len)};
}

// ---- loss / evaluation ---------------------------------------------------------------

Tensor task_loss(const Tensor& logits, const Batch& batch, const TaskSpec& task, const LossSettings& s) {
    if (task.kind == TaskKind::multiclass7) return cross_entropy(logits, batch.class_ids, s.reduction);
    switch (s.kind) {
    case LossKind::bce: return bce(logits, batch.targets, s.reduction);
    case LossKind::weighted_bce: return weighted_bce(logits, batch.targets, s.pos_weights, s.reduction);
    case LossKind::focal: return focal_multilabel(logits, batch.targets, s.focal_gamma, s.focal_alpha, s.reduction);
    }
    throw ContractError("task_loss: unknown loss kind");
}

MetricsReport evaluate(const Model& model, const SlotMode& mode, const std::string& head, const EncodedSplit& split,
                       double threshold, std::size_t batch_size, const EvalObserver& observer) {
    if (split.size() == 0) throw ConfigError("cannot evaluate on an empty split");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    NoGradGuard no_grad;
    const TaskSpec& task = split.task;
    const std::size_t c = num_labels(task.kind);
    std::vector<double> logits;
    logits.reserve(split.size() * c);
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < split.size(); start += batch_size) {
        idx.resize(std::min(batch_size, split.size() - start));
        std::iota(idx.begin(), idx.end(), start);
        const Batch batch = make_batch(split, idx);
        const auto fwd = model.forward(batch, mode, head);
        if (observer) observer(fwd, batch);
        const auto d = fwd.logits.data();
        logits.insert(logits.end(), d.begin(), d.end());
    }
    if (task.kind == TaskKind::multiclass7) return multiclass_report(logits, split.class_ids, c);
    return multilabel_report(logits, split.targets, c, class_names(task), threshold);
}

std::string resolve_early_stop_metric(const TrainConfig& config, const TaskSpec& task) {
    if (config.metric_for_early_stop != "auto") return config.metric_for_early_stop;
    return task.kind == TaskKind::multilabel6 ? "weighted_f1" : "accuracy";
}

double report_metric(const MetricsReport& r, const std::string& metric) {
    if (metric == "weighted_f1") return r.weighted_f1;
    if (metric == "mean_accuracy") return r.mean_accuracy;
    if (metric == "accuracy") return r.accuracy;
    throw ConfigError("unknown metric '" + metric + "'");
}

nlohmann::ordered_json TrainResult::to_json() const {
    nlohmann::ordered_json j;
    j["stage"] = stage;
    j["seed"] = seed;
    j["early_stop_metric"] = early_stop_metric;
    j["pos_weights"] = pos_weights;
    j["warnings"] = warnings;
    j["trainable_params"] = trainable_params;
    j["total_params"] = total_params;
    j["epochs_run"] = history.size();
    j["best_epoch"] = best_epoch;
    j["best_valid_metric"] = best_metric;
    j["stopped_early"] = stopped_early;
    auto hist = nlohmann::ordered_json::array();
    for (const auto& e : history)
        hist.push_back({{"epoch", e.epoch},
                        {"train_loss", e.train_loss},
                        {"valid_metric", e.valid_metric},
                        {"improved", e.improved}});
    j["history"] = std::move(hist);
    j["frozen_audit"] = {{"sha256_before", frozen_hash_before},
                         {"sha256_after", frozen_hash_after},
                         {"ok", frozen_ok()}};
    j["valid"] = valid.to_json();
    j["test"] = test.to_json();
    return j;
}

// ---- training --------------------------------------------------------------------------

TrainResult train_stage(Model& model, const SlotMode& mode, const Stage& stage, const TaskSpec& task,
                        const Splits& splits, const TrainConfig& config, std::uint64_t seed,
                        const EvalObserver& observer) {
    config.validate();
    for (const auto& [name, split] : {std::pair{"train", &splits.train}, std::pair{"valid", &splits.valid},
                                      std::pair{"test", &splits.test}})
        if (split->size() == 0) throw ConfigError(std::string("empty ") + name + " split");
    if (!(splits.train.task == task) || !(splits.valid.task == task) || !(splits.test.task == task))
        throw ContractError("train_stage: splits were encoded for another task");

    ParamStore& store = model.params();
    set_trainable(store, stage);
    const auto trainable = store.trainable();
    if (trainable.empty()) throw ConfigError("stage " + stage_name(stage) + " has no trainable parameters");
    auto frozen = [&stage](const std::string& group) { return !group_trainable(stage, group); };

    TrainResult r;
    r.stage = stage_name(stage);
    r.seed = seed;
    r.early_stop_metric = resolve_early_stop_metric(config, task);
    const ParamCount count = count_parameters(store);
    r.trainable_params = count.trainable;
    r.total_params = count.total;
    r.frozen_hash_before = sha256_hex(serialize_params(store, frozen));

    LossSettings ls;
    ls.kind = config.loss;
    ls.reduction = config.loss_reduction;
    ls.focal_gamma = config.focal_gamma;
    ls.focal_alpha = config.focal_alpha;
    if (task.kind != TaskKind::multiclass7 && config.loss == LossKind::weighted_bce) {
        PosWeights pw = pos_weights(splits.train.stats);
        ls.pos_weights = pw.w;
        r.pos_weights = pw.w;
        r.warnings = pw.warnings;
    }

    AdamW opt({config.weight_decay, config.beta1, config.beta2, config.adam_eps});
    const std::size_t n = splits.train.size();
    const std::size_t per_epoch = (n + config.batch_size - 1) / config.batch_size;
    const std::size_t total_steps = per_epoch * config.epochs;
    std::size_t step = 0;

    std::mt19937_64 rng(seed ^ 0x5f3759df9e3779b9ULL);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    std::vector<std::vector<double>> best(trainable.size());
    double best_metric = -std::numeric_limits<double>::infinity();

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0;
        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::size_t len = std::min(config.batch_size, n - start);
            const Batch batch = make_batch(splits.train, std::span(order).subspan(start, len));
            store.zero_grad();
            const auto fwd = model.forward(batch, mode, task.name);
            const Tensor loss = task_loss(fwd.logits, batch, task, ls);
            const double value = loss.item();
            if (!std::isfinite(value))
                throw DivergenceError("non-finite loss " + std::to_string(value) + " at epoch " +
                                      std::to_string(epoch) + ", step " + std::to_string(step) + " (lr " +
                                      std::to_string(lr_schedule(step, total_steps, config.lr, config.warmup_steps)) +
                                      ")");
            backward(loss);
            opt.step(trainable, lr_schedule(step, total_steps, config.lr, config.warmup_steps));
            ++step;
            loss_sum += value;
            r.step_losses.push_back(value);
        }
        store.zero_grad();

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(per_epoch);
        rec.valid_metric = report_metric(
            evaluate(model, mode, task.name, splits.valid, config.threshold, config.batch_size), r.early_stop_metric);
        rec.improved = rec.valid_metric > best_metric;
        if (rec.improved) {
            best_metric = rec.valid_metric;
            r.best_epoch = epoch;
            for (std::size_t i = 0; i < trainable.size(); ++i) {
                const auto d = trainable[i].tensor.data();
                best[i].assign(d.begin(), d.end());
            }
        }
        r.history.push_back(rec);
        if (epoch - r.best_epoch >= config.patience && epoch < config.epochs) {
            r.stopped_early = true;
            break;
        }
    }

    for (std::size_t i = 0; i < trainable.size(); ++i) {
        Tensor t = trainable[i].tensor;
        auto d = t.mutable_data();
        std::copy(best[i].begin(), best[i].end(), d.begin());
        round_to_f32(d);
    }
    r.best_metric = best_metric;
    r.frozen_hash_after = sha256_hex(serialize_params(store, frozen));

    r.valid = evaluate(model, mode, task.name, splits.valid, config.threshold, config.batch_size, observer);
    r.valid.split = "valid";
    r.valid.seed = seed;
    r.test = evaluate(model, mode, task.name, splits.test, config.threshold, config.batch_size, observer);
    r.test.split = "test";
    r.test.seed = seed;
    return r;
}

StageOutcome train_adapter(const TaskSpec& task, const Splits& splits, const Checkpoint& encoder,
                           const TrainConfig& config, std::uint64_t seed, const EvalObserver& observer) {
    TrainConfig effective = config;
    effective.model = checkpoint_model_config(encoder);
    effective.validate();
    Model model = Model::encoder_from_checkpoint(encoder);
    model.add_adapter(task.name, seed);
    model.add_head(task, seed);
    TrainResult result = train_stage(model, SlotMode::single(task.name), Stage::adapter_training(task.name), task,
                                     splits, effective, seed, observer);
    return {std::move(model), std::move(result)};
}

StageOutcome train_fusion(const TaskSpec& target, const std::vector<Checkpoint>& adapter_checkpoints,
                          const Splits& splits, const TrainConfig& config, std::uint64_t seed,
                          const EvalObserver& observer) {
    if (adapter_checkpoints.empty()) throw ConfigError("fusion needs at least one adapter checkpoint");
    TrainConfig effective = config;
    effective.model = checkpoint_model_config(adapter_checkpoints.front());
    effective.validate();

    Model model = Model::encoder_from_checkpoint(adapter_checkpoints.front());
    std::vector<std::string> tasks;
    for (const auto& ckpt : adapter_checkpoints) {
        const auto names = model.import_adapters(ckpt);
        tasks.insert(tasks.end(), names.begin(), names.end());
    }
    model.add_fusion(tasks, seed);
    model.add_head(target, seed);
    TrainResult result = train_stage(model, SlotMode::fusion(tasks), Stage::fusion_training(target.name), target,
                                     splits, effective, seed, observer);
    return {std::move(model), std::move(result)};
}

ExperimentResult run_experiment(std::size_t runs, std::uint64_t base_seed,
                                const std::function<RunOutcome(std::uint64_t)>& run, std::size_t max_threads) {
    if (runs == 0) throw ConfigError("runs must be at least 1");
    std::vector<std::optional<RunOutcome>> results(runs);
    std::vector<std::exception_ptr> errors(runs);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < runs; i = next++) {
            try {
                results[i] = run(base_seed + i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t threads = std::clamp<std::size_t>(max_threads, 1, runs);
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);

    ExperimentResult out;
    std::vector<MetricsReport> tests;
    for (auto& r : results) {
        tests.push_back(r->result.test);
        out.runs.push_back(std::move(*r));
    }
    out.aggregate = mean_report(tests);
    out.aggregate.split = "test";
    return out;
}

std::size_t threads_from_env() {
    const char* v = std::getenv("FUSEFORMER_THREADS");
    if (!v || !*v) return 1;
    char* end = nullptr;
    const long n = std::strtol(v, &end, 10);
    return (*end == '\0' && n > 0) ? static_cast<std::size_t>(n) : 1;
}

} // namespace fuseformer
