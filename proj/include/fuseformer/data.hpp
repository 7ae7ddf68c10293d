// Copyright (c) 2026, The Fuseformer Authors
// SPDX-License-Identifier: Apache-2.0
//
// Corpus ingestion, label derivation, vocabulary and tokenization, class
// statistics and a synthetic imbalanced-corpus generator.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace fuseformer {

inline constexpr std::size_t kNumEmotions = 6;
/// Emotion column order used for labels, statistics and report tables.
inline constexpr std::array<std::string_view, kNumEmotions> kEmotionNames{"Joy",      "Sadness", "Anger",
                                                                         "Surprise", "Disgust", "Fear"};
/// Positive-sample proportions of the reference emotion corpus, same order.
inline constexpr std::array<double, kNumEmotions> kReferencePriors{0.52, 0.25, 0.21, 0.10, 0.17, 0.08};

using EmotionVector = std::array<double, kNumEmotions>;

struct RawExample {
    std::string id;
    std::string text;
    std::optional<double> sentiment;         // [-3, 3]
    std::optional<EmotionVector> emotions;   // each in [0, 3]
    std::optional<int> binary_label;         // 0 or 1

    bool operator==(const RawExample&) const = default;
};

using Corpus = std::vector<RawExample>;

enum class CorpusSchema { mosei, binary };

CorpusSchema parse_schema(std::string_view name);

Corpus load_corpus(const std::filesystem::path& path, CorpusSchema schema);
/// Same as load_corpus; `source` prefixes error messages.
Corpus parse_corpus(std::istream& in, CorpusSchema schema, const std::string& source = "<stream>");
std::string to_jsonl(const RawExample& example);
void write_corpus(const std::filesystem::path& path, const Corpus& corpus);

// ---- label derivation ----------------------------------------------------------

enum class Polarity { negative, non_negative };

/// Negative iff s < 0.
Polarity binarize_sentiment(double s);
/// Round half away from zero, clamp to [-3, 3], shift to {0..6}.
int discretize_sentiment_7(double s);
/// Component i is 1 iff e_i > 0.
std::array<int, kNumEmotions> binarize_emotions(std::span<const double> e);

// ---- tasks ---------------------------------------------------------------------

enum class TaskKind { binary, multiclass7, multilabel6 };
enum class LabelSource { sentiment_binary, sentiment_7, emotions, binary_label };

/// A named task: the adapter/head name plus how labels are derived.
struct TaskSpec {
    std::string name;
    TaskKind kind = TaskKind::multilabel6;
    LabelSource source = LabelSource::emotions;

    bool operator==(const TaskSpec&) const = default;
};

/// sent2 | sent7 | emotion | binary-ext; `name` defaults to the task id.
TaskSpec task_from_id(std::string_view id, std::string name = {});
std::string task_id(const TaskSpec& task);
std::size_t num_labels(TaskKind kind);
CorpusSchema schema_for(const TaskSpec& task);
std::vector<std::string> class_names(const TaskSpec& task);

/// {0,1} targets for sigmoid heads (binary: 1 value, multilabel: 6 values).
std::vector<double> binary_targets(const RawExample& example, const TaskSpec& task);
/// Class id for the 7-way task.
int class_id(const RawExample& example, const TaskSpec& task);

// ---- vocabulary / tokenization ----------------------------------------------

std::vector<std::string_view> split_whitespace(std::string_view text);

class Vocabulary {
  public:
    static constexpr std::size_t kPad = 0;
    static constexpr std::size_t kUnk = 1;
    static constexpr std::size_t kCls = 2;
    static constexpr std::size_t kSep = 3;
    static constexpr std::size_t kNumSpecials = 4;

    Vocabulary();

    /// Tokens ranked by frequency, ties broken lexicographically, truncated so
    /// that specials + tokens == max_size.
    static Vocabulary build(std::span<const std::string> texts, std::size_t max_size);
    static Vocabulary build(const Corpus& corpus, std::size_t max_size);
    /// Regular (non-special) tokens in id order.
    static Vocabulary from_tokens(std::span<const std::string> tokens);
    static Vocabulary load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    std::size_t size() const { return tokens_.size(); }
    std::size_t id(std::string_view token) const;
    const std::string& token(std::size_t id) const;
    /// Regular tokens only, in id order (ids start at kNumSpecials).
    std::vector<std::string> regular_tokens() const;

    bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

  private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct Tokenized {
    std::vector<std::size_t> ids;
    std::vector<int> mask;
};

Tokenized tokenize(std::string_view text, const Vocabulary& vocab, std::size_t max_len);

/// Token ids, mask and segment ids laid out row-major [B×L].
struct Batch {
    std::size_t batch_size = 0;
    std::size_t seq_len = 0;
    std::vector<std::size_t> token_ids;
    std::vector<int> attention_mask;
    std::vector<std::size_t> segment_ids;
    std::vector<double> targets;  // [B×C] for sigmoid heads
    std::vector<int> class_ids;   // [B] for the 7-way head
};

// ---- statistics -------------------------------------------------------------

struct ClassStats {
    std::vector<std::string> names;
    std::vector<std::size_t> positives;
    std::vector<std::size_t> negatives;
    std::size_t total = 0;
};

/// Per-class positive/negative counts after label derivation (one-vs-rest
/// for the 7-way task).
ClassStats class_statistics(const Corpus& corpus, const TaskSpec& task);

// ---- synthetic corpora --------------------------------------------------------

/// Shape of the synthetic text. Each class owns `markers_per_class` marker
/// tokens; a positive example carries one with probability `marker_rate`, a
/// negative one with probability `leak_rate`. The remaining words are drawn
/// from `noise_words` neutral tokens.
struct SynthSpec {
    std::size_t markers_per_class = 3;
    double marker_rate = 0.8;
    double leak_rate = 0.1;
    std::size_t noise_words = 200;
    std::size_t min_noise = 3;
    std::size_t max_noise = 10;
};

/// Mosei-style corpus with per-class Bernoulli(prior) emotion presence and a
/// sentiment score driven by joy against sadness/anger.
Corpus synth_corpus(std::uint64_t seed, std::size_t n, const EmotionVector& priors, const SynthSpec& spec = {});
/// Binary-style corpus (positive/negative reviews) for external sentiment tasks.
Corpus synth_binary_corpus(std::uint64_t seed, std::size_t n, double positive_rate, const SynthSpec& spec = {});

} // namespace fuseformer
