// Copyright (c) 2026, The Fuseformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "fuseformer/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fuseformer/errors.hpp"

namespace fuseformer {

namespace {

using ordered_json = nlohmann::ordered_json;

[[noreturn]] void fail_at(const std::string& source, std::size_t line, const std::string& what) {
    throw LoadError(source + ":" + std::to_string(line) + ": " + what);
}

double require_number(const nlohmann::json& v, const std::string& field, const std::string& source,
                      std::size_t line) {
    if (!v.is_number()) fail_at(source, line, "field '" + field + "' must be a number");
    return v.get<double>();
}

std::string lowercase(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

double round2(double v) { return std::round(v * 100.0) / 100.0; }

} // namespace

CorpusSchema parse_schema(std::string_view name) {
    if (name == "mosei" || name == "mosei-style") return CorpusSchema::mosei;
    if (name == "binary" || name == "binary-style") return CorpusSchema::binary;
    throw ConfigError("unknown corpus schema '" + std::string(name) + "'");
}

Corpus parse_corpus(std::istream& in, CorpusSchema schema, const std::string& source) {
    Corpus out;
    std::string raw;
    std::size_t line = 0;
    while (std::getline(in, raw)) {
        ++line;
        if (std::all_of(raw.begin(), raw.end(), [](unsigned char c) { return std::isspace(c); })) continue;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(raw);
        } catch (const nlohmann::json::parse_error& e) {
            fail_at(source, line, std::string("malformed JSON: ") + e.what());
        }
        if (!obj.is_object()) fail_at(source, line, "expected a JSON object");

        RawExample ex;
        for (const char* field : {"id", "text"}) {
            auto it = obj.find(field);
            if (it == obj.end()) fail_at(source, line, std::string("missing required field '") + field + "'");
            if (!it->is_string()) fail_at(source, line, std::string("field '") + field + "' must be a string");
        }
        ex.id = obj["id"].get<std::string>();
        ex.text = obj["text"].get<std::string>();

        if (schema == CorpusSchema::mosei) {
            if (auto it = obj.find("sentiment"); it != obj.end()) {
                const double s = require_number(*it, "sentiment", source, line);
                if (s < -3.0 || s > 3.0)
                    fail_at(source, line, "sentiment " + std::to_string(s) + " outside [-3, 3]");
                ex.sentiment = s;
            }
            if (auto it = obj.find("emotions"); it != obj.end()) {
                if (!it->is_array()) fail_at(source, line, "field 'emotions' must be an array");
                if (it->size() != kNumEmotions)
                    fail_at(source, line, "field 'emotions' must have 6 entries, got " + std::to_string(it->size()));
                EmotionVector e{};
                for (std::size_t i = 0; i < kNumEmotions; ++i) {
                    e[i] = require_number((*it)[i], "emotions", source, line);
                    if (e[i] < 0.0 || e[i] > 3.0)
                        fail_at(source, line, "emotion " + std::string(kEmotionNames[i]) + " value " +
                                                  std::to_string(e[i]) + " outside [0, 3]");
                }
                ex.emotions = e;
            }
            if (!ex.sentiment && !ex.emotions)
                fail_at(source, line, "missing required field: need 'sentiment' and/or 'emotions'");
        } else {
            auto it = obj.find("binary_label");
            if (it == obj.end()) fail_at(source, line, "missing required field 'binary_label'");
            if (!it->is_number_integer() || (it->get<long long>() != 0 && it->get<long long>() != 1))
                fail_at(source, line, "field 'binary_label' must be 0 or 1");
            ex.binary_label = static_cast<int>(it->get<long long>());
        }
        out.push_back(std::move(ex));
    }
    return out;
}

Corpus load_corpus(const std::filesystem::path& path, CorpusSchema schema) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open corpus file " + path.string());
    return parse_corpus(in, schema, path.string());
}

std::string to_jsonl(const RawExample& ex) {
    ordered_json j;
    j["id"] = ex.id;
    j["text"] = ex.text;
    if (ex.sentiment) j["sentiment"] = *ex.sentiment;
    if (ex.emotions) j["emotions"] = std::vector<double>(ex.emotions->begin(), ex.emotions->end());
    if (ex.binary_label) j["binary_label"] = *ex.binary_label;
    return j.dump();
}

void write_corpus(const std::filesystem::path& path, const Corpus& corpus) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot write corpus file " + path.string());
    for (const auto& ex : corpus) out << to_jsonl(ex) << '\n';
}

// ---- labels --------------------------------------------------------------------

Polarity binarize_sentiment(double s) {
    if (!(s >= -3.0 && s <= 3.0)) throw ContractError("sentiment " + std::to_string(s) + " outside [-3, 3]");
    return s < 0.0 ? Polarity::negative : Polarity::non_negative;
}

int discretize_sentiment_7(double s) {
    if (!(s >= -3.0 && s <= 3.0)) throw ContractError("sentiment " + std::to_string(s) + " outside [-3, 3]");
    const double r = std::round(s); // half away from zero
    return static_cast<int>(std::clamp(r, -3.0, 3.0)) + 3;
}

std::array<int, kNumEmotions> binarize_emotions(std::span<const double> e) {
    if (e.size() != kNumEmotions) throw ContractError("expected 6 emotion values, got " + std::to_string(e.size()));
    std::array<int, kNumEmotions> out{};
    for (std::size_t i = 0; i < kNumEmotions; ++i) {
        if (!(e[i] >= 0.0 && e[i] <= 3.0))
            throw ContractError("emotion value " + std::to_string(e[i]) + " outside [0, 3]");
        out[i] = e[i] > 0.0 ? 1 : 0;
    }
    return out;
}

// ---- tasks ---------------------------------------------------------------------

TaskSpec task_from_id(std::string_view id, std::string name) {
    TaskSpec t;
    if (id == "sent2") {
        t = {"sent2", TaskKind::binary, LabelSource::sentiment_binary};
    } else if (id == "sent7") {
        t = {"sent7", TaskKind::multiclass7, LabelSource::sentiment_7};
    } else if (id == "emotion") {
        t = {"emotion", TaskKind::multilabel6, LabelSource::emotions};
    } else if (id == "binary-ext") {
        t = {"binary-ext", TaskKind::binary, LabelSource::binary_label};
    } else {
        throw ConfigError("unknown task '" + std::string(id) + "' (expected sent2|sent7|emotion|binary-ext)");
    }
    if (!name.empty()) t.name = std::move(name);
    return t;
}

std::string task_id(const TaskSpec& task) {
    switch (task.source) {
    case LabelSource::sentiment_binary: return "sent2";
    case LabelSource::sentiment_7: return "sent7";
    case LabelSource::emotions: return "emotion";
    case LabelSource::binary_label: return "binary-ext";
    }
    return "emotion";
}

std::size_t num_labels(TaskKind kind) {
    switch (kind) {
    case TaskKind::binary: return 1;
    case TaskKind::multiclass7: return 7;
    case TaskKind::multilabel6: return kNumEmotions;
    }
    return 0;
}

CorpusSchema schema_for(const TaskSpec& task) {
    return task.source == LabelSource::binary_label ? CorpusSchema::binary : CorpusSchema::mosei;
}

std::vector<std::string> class_names(const TaskSpec& task) {
    switch (task.kind) {
    case TaskKind::binary: return {"Positive"};
    case TaskKind::multiclass7: return {"-3", "-2", "-1", "0", "+1", "+2", "+3"};
    case TaskKind::multilabel6: return {kEmotionNames.begin(), kEmotionNames.end()};
    }
    return {};
}

std::vector<double> binary_targets(const RawExample& ex, const TaskSpec& task) {
    switch (task.source) {
    case LabelSource::sentiment_binary:
        if (!ex.sentiment) throw ConfigError("example '" + ex.id + "' has no sentiment label");
        return {binarize_sentiment(*ex.sentiment) == Polarity::non_negative ? 1.0 : 0.0};
    case LabelSource::emotions: {
        if (!ex.emotions) throw ConfigError("example '" + ex.id + "' has no emotion labels");
        const auto b = binarize_emotions(*ex.emotions);
        return {b.begin(), b.end()};
    }
    case LabelSource::binary_label:
        if (!ex.binary_label) throw ConfigError("example '" + ex.id + "' has no binary_label");
        return {static_cast<double>(*ex.binary_label)};
    case LabelSource::sentiment_7: break;
    }
    throw ConfigError("task '" + task.name + "' is not a sigmoid-head task");
}

int class_id(const RawExample& ex, const TaskSpec& task) {
    if (task.source != LabelSource::sentiment_7) throw ConfigError("task '" + task.name + "' is not a 7-way task");
    if (!ex.sentiment) throw ConfigError("example '" + ex.id + "' has no sentiment label");
    return discretize_sentiment_7(*ex.sentiment);
}

// ---- vocabulary --------------------------------------------------------------------

std::vector<std::string_view> split_whitespace(std::string_view text) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        std::size_t j = i;
        while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
        if (j > i) out.push_back(text.substr(i, j - i));
        i = j;
    }
    return out;
}

Vocabulary::Vocabulary() {
    for (const char* s : {"[PAD]", "[UNK]", "[CLS]", "[SEP]"}) {
        index_.emplace(s, tokens_.size());
        tokens_.emplace_back(s);
    }
}

Vocabulary Vocabulary::build(std::span<const std::string> texts, std::size_t max_size) {
    if (texts.empty()) throw ContractError("build_vocab: empty corpus");
    if (max_size < kNumSpecials) throw ContractError("build_vocab: max_size must be at least 4");
    std::map<std::string, std::size_t, std::less<>> freq;
    for (const auto& t : texts)
        for (auto tok : split_whitespace(t)) {
            auto it = freq.find(tok);
            if (it == freq.end())
                freq.emplace(std::string(tok), 1);
            else
                ++it->second;
        }
    std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
    // std::map iteration is already lexicographic, so a stable sort on
    // frequency keeps the tie-break.
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    if (ranked.size() > max_size - kNumSpecials) ranked.resize(max_size - kNumSpecials);
    std::vector<std::string> tokens;
    tokens.reserve(ranked.size());
    for (auto& [tok, _] : ranked) tokens.push_back(tok);
    return from_tokens(tokens);
}

Vocabulary Vocabulary::build(const Corpus& corpus, std::size_t max_size) {
    std::vector<std::string> texts;
    texts.reserve(corpus.size());
    for (const auto& ex : corpus) texts.push_back(ex.text);
    return build(texts, max_size);
}

Vocabulary Vocabulary::from_tokens(std::span<const std::string> tokens) {
    Vocabulary v;
    for (const auto& t : tokens) {
        if (t.empty() || std::any_of(t.begin(), t.end(), [](unsigned char c) { return std::isspace(c); }))
            throw LoadError("vocabulary token '" + t + "' is empty or contains whitespace");
        if (!v.index_.emplace(t, v.tokens_.size()).second) throw LoadError("duplicate vocabulary token '" + t + "'");
        v.tokens_.push_back(t);
    }
    return v;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open vocabulary file " + path.string());
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        tokens.push_back(line);
    }
    return from_tokens(tokens);
}

void Vocabulary::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot write vocabulary file " + path.string());
    for (std::size_t i = kNumSpecials; i < tokens_.size(); ++i) out << tokens_[i] << '\n';
}

std::size_t Vocabulary::id(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(std::size_t id) const {
    if (id >= tokens_.size()) throw ContractError("token id " + std::to_string(id) + " out of range");
    return tokens_[id];
}

std::vector<std::string> Vocabulary::regular_tokens() const {
    return {tokens_.begin() + kNumSpecials, tokens_.end()};
}

Tokenized tokenize(std::string_view text, const Vocabulary& vocab, std::size_t max_len) {
    if (max_len < 2) throw ContractError("tokenize: max_len must be at least 2");
    Tokenized out;
    out.ids.assign(max_len, Vocabulary::kPad);
    out.mask.assign(max_len, 0);
    const auto words = split_whitespace(text);
    const std::size_t kept = std::min(words.size(), max_len - 2);
    out.ids[0] = Vocabulary::kCls;
    for (std::size_t i = 0; i < kept; ++i) out.ids[i + 1] = vocab.id(words[i]);
    out.ids[kept + 1] = Vocabulary::kSep;
    std::fill_n(out.mask.begin(), kept + 2, 1);
    return out;
}

// ---- statistics --------------------------------------------------------------------

ClassStats class_statistics(const Corpus& corpus, const TaskSpec& task) {
    ClassStats st;
    st.names = class_names(task);
    const std::size_t c = st.names.size();
    st.positives.assign(c, 0);
    st.total = corpus.size();
    for (const auto& ex : corpus) {
        if (task.kind == TaskKind::multiclass7) {
            ++st.positives[static_cast<std::size_t>(class_id(ex, task))];
        } else {
            const auto t = binary_targets(ex, task);
            for (std::size_t k = 0; k < c; ++k)
                if (t[k] > 0.5) ++st.positives[k];
        }
    }
    st.negatives.resize(c);
    for (std::size_t k = 0; k < c; ++k) st.negatives[k] = st.total - st.positives[k];
    return st;
}

// ---- synthetic corpora ---------------------------------------------------------------

namespace {

void check_synth(std::size_t n, const SynthSpec& spec) {
    if (n == 0) throw ContractError("synth: n must be positive");
    if (spec.markers_per_class == 0 || spec.noise_words == 0 || spec.min_noise > spec.max_noise)
        throw ContractError("synth: invalid vocabulary spec");
    if (!(spec.marker_rate >= 0 && spec.marker_rate <= 1 && spec.leak_rate >= 0 && spec.leak_rate <= 1))
        throw ContractError("synth: marker/leak rates must lie in [0, 1]");
}

std::string join_shuffled(std::vector<std::string> words, std::mt19937_64& rng) {
    std::shuffle(words.begin(), words.end(), rng);
    std::string text;
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (i) text += ' ';
        text += words[i];
    }
    return text;
}

std::vector<std::string> noise(std::mt19937_64& rng, const SynthSpec& spec) {
    std::uniform_int_distribution<std::size_t> len(spec.min_noise, spec.max_noise);
    std::uniform_int_distribution<std::size_t> word(0, spec.noise_words - 1);
    std::vector<std::string> words(len(rng));
    for (auto& w : words) w = "w" + std::to_string(word(rng));
    return words;
}

} // namespace

Corpus synth_corpus(std::uint64_t seed, std::size_t n, const EmotionVector& priors, const SynthSpec& spec) {
    check_synth(n, spec);
    for (double p : priors)
        if (!(p > 0.0 && p < 1.0)) throw ContractError("synth: class priors must lie in (0, 1)");

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> marker(0, spec.markers_per_class - 1);
    std::uniform_int_distribution<int> intensity(1, 9);
    std::normal_distribution<double> jitter(0.0, 0.7);
    // Sentiment contribution of each emotion.
    static constexpr EmotionVector kValence{1.5, -1.2, -1.2, 0.3, -0.6, -0.6};

    Corpus corpus;
    corpus.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        RawExample ex;
        ex.id = "s" + std::to_string(seed) + "-" + std::to_string(i);
        EmotionVector e{};
        auto words = noise(rng, spec);
        double s = 0;
        for (std::size_t k = 0; k < kNumEmotions; ++k) {
            const bool present = unit(rng) < priors[k];
            if (present) {
                e[k] = round2(intensity(rng) / 3.0);
                s += kValence[k];
            }
            const double rate = present ? spec.marker_rate : spec.leak_rate;
            const std::size_t m = marker(rng);
            if (unit(rng) < rate) words.push_back(lowercase(kEmotionNames[k]) + std::to_string(m));
        }
        ex.text = join_shuffled(std::move(words), rng);
        ex.emotions = e;
        ex.sentiment = round2(std::clamp(s + jitter(rng), -3.0, 3.0));
        corpus.push_back(std::move(ex));
    }
    return corpus;
}

Corpus synth_binary_corpus(std::uint64_t seed, std::size_t n, double positive_rate, const SynthSpec& spec) {
    check_synth(n, spec);
    if (!(positive_rate > 0.0 && positive_rate < 1.0)) throw ContractError("synth: positive rate must lie in (0, 1)");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> marker(0, spec.markers_per_class - 1);
    Corpus corpus;
    corpus.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        RawExample ex;
        ex.id = "b" + std::to_string(seed) + "-" + std::to_string(i);
        const bool positive = unit(rng) < positive_rate;
        auto words = noise(rng, spec);
        for (const char* polarity : {"pos", "neg"}) {
            const bool own = (polarity[0] == 'p') == positive;
            const std::size_t m = marker(rng);
            if (unit(rng) < (own ? spec.marker_rate : spec.leak_rate)) words.push_back(polarity + std::to_string(m));
        }
        ex.text = join_shuffled(std::move(words), rng);
        ex.binary_label = positive ? 1 : 0;
        corpus.push_back(std::move(ex));
    }
    return corpus;
}

} // namespace fuseformer
