// Copyright (c) 2026, The Fuseformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "fuseformer/commands.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "fuseformer/adapters.hpp"
#include "fuseformer/checkpoint.hpp"
#include "fuseformer/errors.hpp"
#include "fuseformer/heads.hpp"
#include "fuseformer/model.hpp"
#include "fuseformer/pretrain.hpp"
#include "fuseformer/trainer.hpp"
#include "fuseformer/verify.hpp"

namespace fuseformer {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

/// A check the command performs on its own results did not hold.
class VerificationFailure : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw LoadError("cannot write " + path.string());
    f << text;
    if (!f) throw LoadError("failed writing " + path.string());
}

void write_json(const fs::path& path, const ojson& j) { write_text(path, j.dump(2) + "\n"); }

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream s;
    s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return s.str();
}

/// Wall-clock data lives here so that every other output stays byte-identical
/// across reruns.
void write_metadata(const fs::path& dir, const std::string& command, const std::vector<std::string>& args) {
    ojson j;
    j["command"] = command;
    j["args"] = args;
    j["created_utc"] = utc_now();
    write_json(dir / "metadata.json", j);
}

std::string fixed(double v, int digits) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(digits) << v;
    return s.str();
}

std::vector<double> parse_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream s(text);
    std::string item;
    while (std::getline(s, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::logic_error&) {
            throw ConfigError("not a number: '" + item + "'");
        }
    }
    return out;
}

/// SHA-256 over the stored f32 bytes of the tensors selected by `keep`.
std::string stored_hash(const Checkpoint& ckpt, const std::function<bool(const std::string&)>& keep) {
    std::string bytes;
    for (const auto& t : ckpt.tensors) {
        if (!keep(t.name)) continue;
        bytes += t.name;
        bytes += shape_str(t.shape);
        bytes.append(reinterpret_cast<const char*>(t.values.data()), t.values.size() * sizeof(float));
    }
    return sha256_hex(bytes);
}

bool is_encoder_tensor(const std::string& name) { return name.rfind("encoder.", 0) == 0; }

// ---- shared training flags ---------------------------------------------------

struct TrainFlags {
    std::string config;
    std::string corpus, valid, test;
    std::string task = "emotion";
    std::string name;
    std::string loss, reduction;
    std::optional<std::size_t> runs, epochs, patience, warmup, batch_size, max_len;
    std::optional<std::uint64_t> seed;
    std::optional<double> threshold, lr;
    std::string out;

    void add(CLI::App* app) {
        app->add_option("--config", config, "Training config JSON (flags override its values)");
        app->add_option("--corpus", corpus, "Training corpus (JSONL); carved 80/10/10 without --valid/--test")
            ->required();
        app->add_option("--valid", valid, "Validation corpus");
        app->add_option("--test", test, "Test corpus");
        app->add_option("--task", task, "sent2 | sent7 | emotion | binary-ext");
        app->add_option("--name", name, "Adapter and head name (default: the task id)");
        app->add_option("--loss", loss, "bce | weighted_bce | focal");
        app->add_option("--loss-reduction", reduction, "batch-mean | sum");
        app->add_option("--runs", runs, "Independent runs with seeds seed, seed+1, ...");
        app->add_option("--seed", seed, "Base seed");
        app->add_option("--epochs", epochs, "Epoch cap");
        app->add_option("--patience", patience, "Early-stopping patience in epochs");
        app->add_option("--lr", lr, "Peak learning rate");
        app->add_option("--warmup-steps", warmup, "Linear warmup steps");
        app->add_option("--batch-size", batch_size, "Minibatch size");
        app->add_option("--max-len", max_len, "Token cap including [CLS]");
        app->add_option("--threshold", threshold, "Sigmoid decision threshold");
        app->add_option("--out", out, "Output directory")->required();
    }

    TrainConfig resolve() const {
        TrainConfig c = config.empty() ? TrainConfig{} : TrainConfig::load(config);
        if (!loss.empty()) c.loss = parse_loss(loss);
        if (!reduction.empty()) c.loss_reduction = parse_reduction(reduction);
        if (runs) c.runs = *runs;
        if (seed) c.seed = *seed;
        if (epochs) c.epochs = *epochs;
        if (patience) c.patience = *patience;
        if (lr) c.lr = *lr;
        if (warmup) c.warmup_steps = *warmup;
        if (batch_size) c.batch_size = *batch_size;
        if (max_len) c.max_len = *max_len;
        if (threshold) c.threshold = *threshold;
        c.validate();
        return c;
    }

    TaskSpec task_spec() const { return task_from_id(task, name); }

    CorpusSplits load_splits(const TaskSpec& spec, std::uint64_t seed) const {
        const CorpusSchema schema = schema_for(spec);
        Corpus all = load_corpus(corpus, schema);
        if (valid.empty() != test.empty()) throw ConfigError("--valid and --test must be given together");
        if (valid.empty()) return carve_splits(all, seed);
        return {std::move(all), load_corpus(valid, schema), load_corpus(test, schema)};
    }
};

ojson task_json(const TaskSpec& task) {
    ojson j;
    j["name"] = task.name;
    j["id"] = task_id(task);
    return j;
}

ojson checkpoint_extra(const std::string& stage, const TaskSpec& task, const TrainConfig& config, std::uint64_t seed) {
    ojson j;
    j["stage"] = stage;
    j["task"] = task_json(task);
    j["seed"] = seed;
    j["train_config"] = config.to_json();
    return j;
}

/// Writes per-run checkpoints and reports, the aggregate, and a copy of the
/// best run (highest validation metric, first on ties) as model.ckpt.
std::size_t write_experiment(const fs::path& dir, const std::string& command, const TaskSpec& task,
                             const TrainConfig& config, const ojson& inputs, const ExperimentResult& exp,
                             std::ostream& out) {
    std::size_t best = 0;
    ojson per_run = ojson::array();
    ojson seeds = ojson::array();
    for (std::size_t i = 0; i < exp.runs.size(); ++i) {
        const auto& run = exp.runs[i];
        const fs::path run_dir = dir / ("run" + std::to_string(i));
        fs::create_directories(run_dir);
        save_checkpoint(run_dir / "model.ckpt", run.checkpoint);
        ojson report;
        report["command"] = command;
        report["task"] = task_json(task);
        report["config"] = config.to_json();
        report["inputs"] = inputs;
        report["run"] = i;
        report["result"] = run.result.to_json();
        write_json(run_dir / "report.json", report);
        write_text(run_dir / "report.txt", run.result.test.to_table());
        per_run.push_back(run.result.test.to_json());
        seeds.push_back(run.seed);
        if (run.result.best_metric > exp.runs[best].result.best_metric) best = i;
        out << "run " << i << " (seed " << run.seed << "): best epoch " << run.result.best_epoch << " of "
            << run.result.history.size() << ", valid " << run.result.early_stop_metric << " "
            << fixed(run.result.best_metric, 4) << (run.result.stopped_early ? ", stopped early" : "") << "\n";
        for (const auto& w : run.result.warnings) out << "warning: " << w << "\n";
    }
    save_checkpoint(dir / "model.ckpt", exp.runs[best].checkpoint);

    ojson agg;
    agg["command"] = command;
    agg["task"] = task_json(task);
    agg["config"] = config.to_json();
    agg["inputs"] = inputs;
    agg["seeds"] = seeds;
    agg["best_run"] = best;
    agg["runs"] = per_run;
    agg["mean"] = exp.aggregate.to_json();
    write_json(dir / "aggregate.json", agg);
    write_text(dir / "aggregate.txt", exp.aggregate.to_table());
    out << "test, mean of " << exp.runs.size() << " run(s):\n" << exp.aggregate.to_table();
    return best;
}

// ---- stats --------------------------------------------------------------------

struct StatsCmd {
    std::string corpus, task = "emotion", priors, out;

    void add(CLI::App* app) {
        auto* c = app->add_option("--corpus", corpus, "Corpus (JSONL)");
        auto* p = app->add_option("--priors", priors, "Comma-separated positive proportions instead of a corpus");
        c->excludes(p);
        app->add_option("--task", task, "sent2 | sent7 | emotion | binary-ext");
        app->add_option("--out", out, "Write the statistics as JSON");
    }

    int run(std::ostream& os) const {
        const TaskSpec spec = task_from_id(task);
        ClassStats stats;
        if (!priors.empty()) {
            stats = stats_from_proportions(parse_list(priors), class_names(spec));
        } else {
            if (corpus.empty()) throw ConfigError("stats needs --corpus or --priors");
            const Corpus c = load_corpus(corpus, schema_for(spec));
            if (c.empty()) throw ConfigError("corpus " + corpus + " is empty");
            stats = class_statistics(c, spec);
        }
        const PosWeights w = pos_weights(stats);

        ojson j;
        j["task"] = task_id(spec);
        j["source"] = priors.empty() ? corpus : "proportions";
        j["total"] = stats.total;
        ojson classes = ojson::array();
        os << std::left << std::setw(10) << "class" << std::right << std::setw(10) << "positives" << std::setw(12)
           << "proportion" << std::setw(10) << "w_c" << "\n";
        for (std::size_t i = 0; i < stats.names.size(); ++i) {
            const double prop = stats.total ? static_cast<double>(stats.positives[i]) / stats.total : 0.0;
            ojson c;
            c["name"] = stats.names[i];
            c["positives"] = stats.positives[i];
            c["negatives"] = stats.negatives[i];
            c["proportion"] = prop;
            c["w"] = w.w[i];
            classes.push_back(c);
            os << std::left << std::setw(10) << stats.names[i] << std::right << std::setw(10) << stats.positives[i]
               << std::setw(12) << fixed(prop, 4) << std::setw(10) << fixed(w.w[i], 3) << "\n";
        }
        j["classes"] = classes;
        j["warnings"] = w.warnings;
        for (const auto& warning : w.warnings) os << "warning: " << warning << "\n";
        if (!out.empty()) write_json(out, j);
        return kExitOk;
    }
};

// ---- synth --------------------------------------------------------------------

struct SynthCmd {
    std::string out, schema = "mosei", priors;
    std::size_t n_train = 4000, n_valid = 500, n_test = 1000;
    std::uint64_t seed = 7;
    double positive_rate = 0.5;

    void add(CLI::App* app) {
        app->add_option("--out", out, "Directory for train/valid/test.jsonl")->required();
        app->add_option("--schema", schema, "mosei | binary");
        app->add_option("--n-train", n_train);
        app->add_option("--n-valid", n_valid);
        app->add_option("--n-test", n_test);
        app->add_option("--seed", seed);
        app->add_option("--priors", priors, "Six comma-separated emotion priors (mosei schema)");
        app->add_option("--positive-rate", positive_rate, "Positive share (binary schema)");
    }

    int run(std::ostream& os) const {
        const CorpusSchema s = parse_schema(schema);
        EmotionVector p = kReferencePriors;
        if (!priors.empty()) {
            const auto v = parse_list(priors);
            if (v.size() != kNumEmotions) throw ConfigError("--priors needs six values");
            std::copy(v.begin(), v.end(), p.begin());
        }
        const std::pair<const char*, std::size_t> parts[] = {{"train", n_train}, {"valid", n_valid}, {"test", n_test}};
        for (std::size_t i = 0; i < 3; ++i) {
            const auto [name, n] = parts[i];
            const Corpus c = s == CorpusSchema::mosei ? synth_corpus(seed + i, n, p)
                                                      : synth_binary_corpus(seed + i, n, positive_rate);
            const fs::path path = fs::path(out) / (std::string(name) + ".jsonl");
            fs::create_directories(out);
            write_corpus(path, c);
            os << "wrote " << n << " examples to " << path.string() << "\n";
        }
        return kExitOk;
    }
};

// ---- pretrain -----------------------------------------------------------------

PretrainConfig pretrain_config(const TrainConfig& c) {
    PretrainConfig p;
    p.model = c.model;
    p.epochs = c.pretrain_epochs;
    p.lr = c.pretrain_lr;
    p.weight_decay = c.weight_decay;
    p.batch_size = c.batch_size;
    p.max_len = c.max_len;
    p.seed = c.encoder_seed;
    return p;
}

Checkpoint build_encoder(const Corpus& corpus, const Vocabulary& vocab, const PretrainConfig& config,
                         PretrainResult* result) {
    const Model m = pretrain_encoder(corpus, vocab, config, result);
    ojson extra;
    extra["stage"] = "pretrain";
    extra["pretrain_config"] = config.to_json();
    return m.to_checkpoint(extra);
}

struct PretrainCmd {
    std::string config, corpus, schema = "mosei", vocab, out;
    std::optional<std::size_t> epochs;
    std::optional<double> lr;
    std::optional<std::uint64_t> seed;

    void add(CLI::App* app) {
        app->add_option("--config", config, "Training config JSON (model, max_len, encoder_seed, pretrain_*)");
        app->add_option("--corpus", corpus, "Unlabeled text source (JSONL)")->required();
        app->add_option("--schema", schema, "mosei | binary");
        app->add_option("--vocab", vocab, "Vocabulary file (default: built from the corpus)");
        app->add_option("--epochs", epochs);
        app->add_option("--lr", lr);
        app->add_option("--seed", seed, "Encoder seed");
        app->add_option("--out", out, "Output directory")->required();
    }

    int run(std::ostream& os, const std::vector<std::string>& args) const {
        TrainConfig c = config.empty() ? TrainConfig{} : TrainConfig::load(config);
        if (epochs) c.pretrain_epochs = *epochs;
        if (lr) c.pretrain_lr = *lr;
        if (seed) c.encoder_seed = *seed;
        c.validate();
        const Corpus text = load_corpus(corpus, parse_schema(schema));
        if (text.empty()) throw ConfigError("corpus " + corpus + " is empty");
        const Vocabulary v = vocab.empty() ? Vocabulary::build(text, c.model.vocab_size) : Vocabulary::load(vocab);
        const PretrainConfig pc = pretrain_config(c);
        PretrainResult result;
        const Checkpoint ckpt = build_encoder(text, v, pc, &result);

        const fs::path dir(out);
        fs::create_directories(dir);
        save_checkpoint(dir / "encoder.ckpt", ckpt);
        v.save(dir / "vocab.txt");
        ojson report;
        report["command"] = "pretrain";
        report["config"] = pc.to_json();
        report["epoch_losses"] = result.epoch_losses;
        report["encoder_sha256"] = stored_hash(ckpt, is_encoder_tensor);
        write_json(dir / "report.json", report);
        write_metadata(dir, "pretrain", args);
        for (std::size_t i = 0; i < result.epoch_losses.size(); ++i)
            os << "epoch " << i + 1 << ": loss " << fixed(result.epoch_losses[i], 6) << "\n";
        os << "wrote " << (dir / "encoder.ckpt").string() << "\n";
        return kExitOk;
    }
};

// ---- train-adapter ----------------------------------------------------------------

struct TrainAdapterCmd {
    TrainFlags flags;
    std::string encoder, vocab;

    void add(CLI::App* app) {
        flags.add(app);
        app->add_option("--encoder", encoder, "Encoder checkpoint (default: pretrain one from the training split)");
        app->add_option("--vocab", vocab, "Vocabulary for the built-in encoder (default: from the training split)");
    }

    int run(std::ostream& os, const std::vector<std::string>& args) const {
        const TrainConfig config = flags.resolve();
        const TaskSpec task = flags.task_spec();
        const CorpusSplits corpora = flags.load_splits(task, config.seed);
        const fs::path dir(flags.out);
        fs::create_directories(dir);

        Checkpoint enc;
        ojson inputs;
        if (!encoder.empty()) {
            enc = load_checkpoint(encoder);
            inputs["encoder"] = encoder;
        } else {
            if (!vocab.empty() && !fs::exists(vocab)) throw LoadError("vocabulary " + vocab + " not found");
            const Vocabulary v =
                vocab.empty() ? Vocabulary::build(corpora.train, config.model.vocab_size) : Vocabulary::load(vocab);
            os << "pretraining encoder for " << config.pretrain_epochs << " epoch(s)\n";
            enc = build_encoder(corpora.train, v, pretrain_config(config), nullptr);
            save_checkpoint(dir / "encoder.ckpt", enc);
            inputs["encoder"] = "built-in";
        }
        inputs["encoder_sha256"] = stored_hash(enc, is_encoder_tensor);
        inputs["corpus"] = flags.corpus;
        if (!flags.valid.empty()) {
            inputs["valid"] = flags.valid;
            inputs["test"] = flags.test;
        }

        const Splits splits = encode_splits(corpora, task, checkpoint_vocab(enc), config.max_len);
        const auto exp = run_experiment(
            config.runs, config.seed,
            [&](std::uint64_t seed) {
                auto o = train_adapter(task, splits, enc, config, seed);
                if (!o.result.frozen_ok()) throw VerificationFailure("encoder changed during adapter training");
                return RunOutcome{seed, o.result, o.model.to_checkpoint(checkpoint_extra("adapter_training", task, config, seed))};
            },
            threads_from_env());
        for (const auto& run : exp.runs)
            if (stored_hash(run.checkpoint, is_encoder_tensor) != inputs["encoder_sha256"])
                throw VerificationFailure("stored encoder differs from the input encoder");
        write_experiment(dir, "train-adapter", task, config, inputs, exp, os);
        write_metadata(dir, "train-adapter", args);
        return kExitOk;
    }
};

// ---- train-fusion ---------------------------------------------------------------

struct TrainFusionCmd {
    TrainFlags flags;
    std::vector<std::string> adapters;

    void add(CLI::App* app) {
        flags.add(app);
        app->add_option("--adapters", adapters, "Adapter checkpoints sharing one encoder")->required();
    }

    int run(std::ostream& os, const std::vector<std::string>& args) const {
        const TrainConfig config = flags.resolve();
        const TaskSpec task = flags.task_spec();
        std::vector<Checkpoint> ckpts;
        for (const auto& p : adapters) ckpts.push_back(load_checkpoint(p));
        const CorpusSplits corpora = flags.load_splits(task, config.seed);
        const Splits splits = encode_splits(corpora, task, checkpoint_vocab(ckpts.front()), config.max_len);

        // Frozen audit: encoder plus each source checkpoint's adapters.
        std::vector<std::pair<std::string, std::function<bool(const std::string&)>>> audits;
        audits.emplace_back("encoder", is_encoder_tensor);
        std::vector<std::string> before;
        before.push_back(stored_hash(ckpts.front(), is_encoder_tensor));
        ojson inputs;
        inputs["corpus"] = flags.corpus;
        inputs["adapters"] = ojson::array();
        for (std::size_t i = 0; i < ckpts.size(); ++i) {
            for (const auto& name : ckpts[i].meta.at("adapters")) {
                const std::string prefix = "adapter." + name.get<std::string>() + ".";
                auto keep = [prefix](const std::string& n) { return n.rfind(prefix, 0) == 0; };
                audits.emplace_back("adapter " + name.get<std::string>(), keep);
                before.push_back(stored_hash(ckpts[i], keep));
                ojson a;
                a["path"] = adapters[i];
                a["adapter"] = name;
                a["sha256"] = before.back();
                inputs["adapters"].push_back(a);
            }
        }
        inputs["encoder_sha256"] = before.front();

        const fs::path dir(flags.out);
        fs::create_directories(dir);
        const auto exp = run_experiment(
            config.runs, config.seed,
            [&](std::uint64_t seed) {
                auto o = train_fusion(task, ckpts, splits, config, seed);
                return RunOutcome{seed, o.result, o.model.to_checkpoint(checkpoint_extra("fusion_training", task, config, seed))};
            },
            threads_from_env());
        write_experiment(dir, "train-fusion", task, config, inputs, exp, os);
        write_metadata(dir, "train-fusion", args);

        bool ok = true;
        for (std::size_t r = 0; r < exp.runs.size(); ++r) {
            const auto& res = exp.runs[r].result;
            os << "run " << r << " frozen parameters: before " << res.frozen_hash_before << " after "
               << res.frozen_hash_after << (res.frozen_ok() ? "" : "  MISMATCH") << "\n";
            ok = ok && res.frozen_ok();
            for (std::size_t a = 0; a < audits.size(); ++a) {
                const std::string after = stored_hash(exp.runs[r].checkpoint, audits[a].second);
                if (after != before[a]) {
                    os << "run " << r << " " << audits[a].first << ": " << before[a] << " -> " << after << "  MISMATCH\n";
                    ok = false;
                }
            }
        }
        if (!ok) {
            os << "FROZEN MISMATCH\n";
            throw VerificationFailure("frozen parameters changed during fusion training");
        }
        os << "FROZEN OK\n";
        return kExitOk;
    }
};

// ---- evaluate -------------------------------------------------------------------

struct EvaluateCmd {
    std::string checkpoint, corpus, head, split = "test", out;
    std::optional<double> threshold;
    std::optional<std::size_t> max_len, batch_size;

    void add(CLI::App* app) {
        app->add_option("--checkpoint", checkpoint)->required();
        app->add_option("--corpus", corpus, "Evaluation corpus (JSONL)")->required();
        app->add_option("--head", head, "Head to evaluate (default: the only head)");
        app->add_option("--split-name", split, "Split label stored in the report");
        app->add_option("--threshold", threshold, "Default: the training threshold");
        app->add_option("--max-len", max_len, "Default: the training max_len");
        app->add_option("--batch-size", batch_size, "Default: the training batch size");
        app->add_option("--out", out, "Directory for report.json and report.txt");
    }

    int run(std::ostream& os) const {
        const Checkpoint ckpt = load_checkpoint(checkpoint);
        const Model model = Model::from_checkpoint(ckpt);
        std::string h = head;
        if (h.empty()) {
            if (model.heads().size() != 1) throw ConfigError("checkpoint has several heads; pass --head");
            h = model.heads().begin()->first;
        }
        const TaskSpec& task = model.head(h);

        TrainConfig trained;
        if (ckpt.meta.contains("train_config")) trained = TrainConfig::from_json(ckpt.meta["train_config"]);
        const double thr = threshold.value_or(trained.threshold);
        const std::size_t len = max_len.value_or(trained.max_len), bs = batch_size.value_or(trained.batch_size);

        const Corpus c = load_corpus(corpus, schema_for(task));
        const EncodedSplit data = encode_split(c, task, model.vocab(), len);
        MetricsReport report = evaluate(model, model.default_mode(h), h, data, thr, bs);
        report.split = split;
        report.seed = ckpt.meta.value("seed", std::uint64_t{0});

        os << report.to_table();
        if (!out.empty()) {
            ojson j;
            j["command"] = "evaluate";
            j["head"] = h;
            j["task"] = task_json(task);
            j["threshold"] = thr;
            j["max_len"] = len;
            j["report"] = report.to_json();
            write_json(fs::path(out) / "report.json", j);
            write_text(fs::path(out) / "report.txt", report.to_table());
        }
        return kExitOk;
    }
};

// ---- grad-check -------------------------------------------------------------------

struct GradCheckCmd {
    std::string config, out, corrupt;
    double tolerance = 1e-4, h = 1e-5;
    std::size_t coords = 8;
    std::uint64_t seed = 0;

    void add(CLI::App* app) {
        app->add_option("--config", config, "Training config JSON; only its model section is used");
        app->add_option("--tolerance", tolerance, "Largest accepted relative error");
        app->add_option("--step", h, "Central-difference step");
        app->add_option("--coords", coords, "Coordinates sampled per tensor (0 = all)");
        app->add_option("--seed", seed);
        app->add_option("--out", out, "Write the report as JSON");
        // Test hook: adds an offset to the analytic gradient of one block.
        app->add_option("--corrupt-block", corrupt)->group("");
    }

    int run(std::ostream& os) const {
        const ModelConfig mc = config.empty() ? ModelConfig{} : TrainConfig::load(config).model;
        FdOptions opt;
        opt.h = h;
        opt.tol = tolerance;
        opt.max_coords_per_tensor = coords;
        opt.seed = seed;
        GradHook hook;
        if (!corrupt.empty())
            hook = [this](const CheckedParam& p, std::vector<double>& g) {
                if (p.block == corrupt)
                    for (double& x : g) x += 0.1;
            };
        const FdReport r = check_model_gradients(mc, opt, hook);

        ojson j;
        j["tolerance"] = tolerance;
        j["h"] = h;
        j["coords_per_tensor"] = coords;
        j["model"] = model_config_to_json(mc);
        j["blocks"] = ojson::array();
        os << std::left << std::setw(14) << "block" << std::right << std::setw(8) << "tensors" << std::setw(8)
           << "coords" << std::setw(14) << "max rel err" << "  result\n";
        for (const auto& b : r.blocks) {
            os << std::left << std::setw(14) << b.block << std::right << std::setw(8) << b.tensors << std::setw(8)
               << b.coords << std::setw(14) << std::scientific << std::setprecision(3) << b.max_rel_error
               << std::defaultfloat << "  " << (b.pass ? "PASS" : "FAIL") << "\n";
            if (!b.pass)
                os << "  worst: " << b.worst_param << "[" << b.worst_index << "] analytic " << b.worst_analytic
                   << " numeric " << b.worst_numeric << "\n";
            ojson bj;
            bj["block"] = b.block;
            bj["tensors"] = b.tensors;
            bj["coords"] = b.coords;
            bj["max_rel_error"] = b.max_rel_error;
            bj["worst_param"] = b.worst_param;
            bj["worst_index"] = b.worst_index;
            bj["pass"] = b.pass;
            j["blocks"].push_back(bj);
        }
        j["pass"] = r.pass;
        if (!out.empty()) write_json(out, j);
        if (!r.pass) throw VerificationFailure("gradient check failed");
        os << "all blocks within " << tolerance << "\n";
        return kExitOk;
    }
};

// ---- count-params -------------------------------------------------------------------

struct CountParamsCmd {
    std::string config, out;
    bool full_scale = false;
    std::size_t labels = 6;

    void add(CLI::App* app) {
        app->add_flag("--full-scale", full_scale, "Reference base-size encoder");
        app->add_option("--config", config, "Training config JSON; only its model section is used");
        app->add_option("--labels", labels, "Head output size");
        app->add_option("--out", out, "Write the counts as JSON");
    }

    int run(std::ostream& os) const {
        if (full_scale && !config.empty()) throw ConfigError("--full-scale and --config are exclusive");
        const ModelConfig mc =
            full_scale ? reference_base_config() : config.empty() ? ModelConfig{} : TrainConfig::load(config).model;
        const std::size_t adapter = layout_numel(adapter_layout(mc, "task"));
        const std::size_t pooler = mc.hidden_size * mc.hidden_size + mc.hidden_size;
        struct Row {
            const char* name;
            ParamCount count;
        };
        const Row rows[] = {
            {"full_finetune", count_parameters(mc, SlotKind::none, 0, labels)},
            {"adapter", count_parameters(mc, SlotKind::single, 1, labels)},
            {"fusion3", count_parameters(mc, SlotKind::fusion, 3, labels)},
            {"fusion5", count_parameters(mc, SlotKind::fusion, 5, labels)},
        };
        auto millions = [](std::size_t n) { return fixed(static_cast<double>(n) / 1e6, 2) + " M"; };

        ojson j;
        j["model"] = model_config_to_json(mc);
        j["labels"] = labels;
        j["per_task_adapter"] = adapter;
        j["pooler_not_instantiated"] = pooler;
        os << std::left << std::setw(15) << "setting" << std::right << std::setw(14) << "total" << std::setw(12)
           << "" << std::setw(14) << "trainable" << std::setw(12) << "" << std::setw(14) << "total+pooler" << "\n";
        for (const auto& r : rows) {
            ojson rj;
            rj["total"] = r.count.total;
            rj["trainable"] = r.count.trainable;
            rj["total_with_pooler"] = r.count.total + pooler;
            j["settings"][r.name] = rj;
            os << std::left << std::setw(15) << r.name << std::right << std::setw(14) << r.count.total << std::setw(12)
               << millions(r.count.total) << std::setw(14) << r.count.trainable << std::setw(12)
               << millions(r.count.trainable) << std::setw(14) << millions(r.count.total + pooler) << "\n";
        }
        const std::size_t diff = rows[3].count.total - rows[2].count.total;
        j["fusion5_minus_fusion3"] = diff;
        os << "per-task adapter: " << adapter << " (" << millions(adapter) << ")\n";
        os << "fusion5 - fusion3 total: " << diff << (diff == 2 * adapter ? " = 2 x adapter" : " != 2 x adapter")
           << "\n";
        os << "pooler (reported, not part of the model): " << pooler << "\n";
        if (!out.empty()) write_json(out, j);
        return kExitOk;
    }
};

} // namespace

ClassStats stats_from_proportions(std::span<const double> proportions, const std::vector<std::string>& names,
                                  std::size_t total) {
    if (proportions.size() != names.size())
        throw ConfigError("expected " + std::to_string(names.size()) + " proportions, got " +
                          std::to_string(proportions.size()));
    ClassStats s;
    s.names = names;
    s.total = total;
    for (double p : proportions) {
        if (!(p >= 0 && p <= 1)) throw ConfigError("proportion " + std::to_string(p) + " outside [0, 1]");
        const auto pos = static_cast<std::size_t>(std::llround(p * static_cast<double>(total)));
        s.positives.push_back(pos);
        s.negatives.push_back(total - pos);
    }
    return s;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Adapter and adapter-fusion training for multi-label emotion recognition", "fuseformer"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");

    StatsCmd stats;
    SynthCmd synth;
    PretrainCmd pretrain;
    TrainAdapterCmd train_adapter_cmd;
    TrainFusionCmd train_fusion_cmd;
    EvaluateCmd evaluate_cmd;
    GradCheckCmd grad_check;
    CountParamsCmd count_params;
    auto* s_stats = app.add_subcommand("stats", "Class statistics and positive weights");
    auto* s_synth = app.add_subcommand("synth", "Write a synthetic corpus");
    auto* s_pretrain = app.add_subcommand("pretrain", "Train an encoder without labels");
    auto* s_adapter = app.add_subcommand("train-adapter", "Stage 1: adapter and head on a frozen encoder");
    auto* s_fusion = app.add_subcommand("train-fusion", "Stage 2: fusion over frozen adapters");
    auto* s_eval = app.add_subcommand("evaluate", "Evaluate a checkpoint on a corpus");
    auto* s_grad = app.add_subcommand("grad-check", "Finite-difference check of every parameter block");
    auto* s_count = app.add_subcommand("count-params", "Parameter accounting per training setting");
    stats.add(s_stats);
    synth.add(s_synth);
    pretrain.add(s_pretrain);
    train_adapter_cmd.add(s_adapter);
    train_fusion_cmd.add(s_fusion);
    evaluate_cmd.add(s_eval);
    grad_check.add(s_grad);
    count_params.add(s_count);

    std::vector<const char*> argv{"fuseformer"};
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitInput;
    }

    try {
        if (*s_stats) return stats.run(out);
        if (*s_synth) return synth.run(out);
        if (*s_pretrain) return pretrain.run(out, args);
        if (*s_adapter) return train_adapter_cmd.run(out, args);
        if (*s_fusion) return train_fusion_cmd.run(out, args);
        if (*s_eval) return evaluate_cmd.run(out);
        if (*s_grad) return grad_check.run(out);
        if (*s_count) return count_params.run(out);
    } catch (const DivergenceError& e) {
        err << "error: training diverged: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const VerificationFailure& e) {
        err << "error: verification failed: " << e.what() << "\n";
        return kExitVerification;
    } catch (const LoadError& e) {
        err << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const DomainError& e) {
        err << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const ContractError& e) {
        err << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const DimensionError& e) {
        err << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kExitInput;
    }
    return kExitInput;
}

} // namespace fuseformer
