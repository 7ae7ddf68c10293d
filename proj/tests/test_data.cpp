// Copyright (c) 2026, The Fuseformer Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "fuseformer/data.hpp"
#include "fuseformer/errors.hpp"

using namespace fuseformer;

namespace {

Corpus parse(const std::string& text, CorpusSchema schema = CorpusSchema::mosei) {
    std::istringstream in(text);
    return parse_corpus(in, schema, "mem");
}

RawExample with_emotions(EmotionVector e) {
    RawExample ex;
    ex.id = "x";
    ex.text = "t";
    ex.sentiment = 0.0;
    ex.emotions = e;
    return ex;
}

} // namespace

TEST_CASE("load_corpus examples", "[data]") {
    const auto c = parse(R"({"id":"a","text":"fine","sentiment":1.5,"emotions":[0,0,0,0,0,0]})"
                         "\n");
    REQUIRE(c.size() == 1);
    CHECK(c[0].id == "a");
    CHECK(c[0].text == "fine");
    CHECK(*c[0].sentiment == 1.5);

    try {
        parse("{\"id\":\"a\",\"text\":\"x\",\"sentiment\":0,\"emotions\":[0,0,0,0,0,0]}\n"
              "{\"id\":\"b\",\"text\":\"x\",\"sentiment\":3.5,\"emotions\":[0,0,0,0,0,0]}\n");
        FAIL("expected a range error");
    } catch (const LoadError& e) {
        CHECK(std::string(e.what()).find("mem:2") != std::string::npos);
    }
    CHECK_THROWS_AS(parse(R"({"id":"a","text":"x","sentiment":0,"emotions":[0,0,0,0,0]})"), LoadError);
    CHECK_THROWS_AS(parse("not json\n"), LoadError);

    const auto b = parse(R"({"id":"r","text":"good","binary_label":1,"extra":true})", CorpusSchema::binary);
    REQUIRE(b.size() == 1);
    CHECK(*b[0].binary_label == 1);
    CHECK_THROWS_AS(parse(R"({"id":"r","text":"good","binary_label":2})", CorpusSchema::binary), LoadError);
}

TEST_CASE("corpus files round-trip", "[data]") {
    const Corpus c = synth_corpus(3, 25, kReferencePriors);
    const auto path = std::filesystem::temp_directory_path() / "fuseformer_data_roundtrip.jsonl";
    write_corpus(path, c);
    CHECK(load_corpus(path, CorpusSchema::mosei) == c);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_corpus(path, CorpusSchema::mosei), LoadError);
}

TEST_CASE("sentiment binarization", "[data]") {
    CHECK(binarize_sentiment(-0.5) == Polarity::negative);
    CHECK(binarize_sentiment(0.0) == Polarity::non_negative);
    CHECK(binarize_sentiment(3.0) == Polarity::non_negative);

    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> d(-3, 3);
    for (int i = 0; i < 10000; ++i) {
        const double s = d(rng);
        CHECK((binarize_sentiment(s) == Polarity::negative) == (s < 0));
    }
}

TEST_CASE("7-class discretization", "[data]") {
    CHECK(discretize_sentiment_7(0.0) == 3);
    CHECK(discretize_sentiment_7(2.4) == 5);
    CHECK(discretize_sentiment_7(-3.0) == 0);
    CHECK(discretize_sentiment_7(0.5) == 4);
    CHECK(discretize_sentiment_7(-0.5) == 2);
    CHECK(discretize_sentiment_7(3.0) == 6);
    CHECK_THROWS_AS(discretize_sentiment_7(3.01), ContractError);
}

TEST_CASE("emotion binarization", "[data]") {
    using A = std::array<int, 6>;
    CHECK(binarize_emotions(std::vector<double>{0, 0, 0, 0, 0, 0}) == A{0, 0, 0, 0, 0, 0});
    CHECK(binarize_emotions(std::vector<double>{0.1, 0, 3, 0, 0, 0}) == A{1, 0, 1, 0, 0, 0});
    CHECK(binarize_emotions(std::vector<double>{0, 0, 0, 0, 0, 0.0001}) == A{0, 0, 0, 0, 0, 1});
    CHECK_THROWS_AS(binarize_emotions(std::vector<double>{0, 0, 0}), ContractError);
}

TEST_CASE("task label derivation", "[data]") {
    const auto ex = with_emotions({0.5, 0, 0, 0, 0, 2});
    CHECK(binary_targets(ex, task_from_id("emotion")) == std::vector<double>{1, 0, 0, 0, 0, 1});
    CHECK(binary_targets(ex, task_from_id("sent2")) == std::vector<double>{1});
    CHECK(class_id(ex, task_from_id("sent7")) == 3);
    CHECK(num_labels(task_from_id("sent7").kind) == 7);
    CHECK_THROWS_AS(task_from_id("sent3"), ConfigError);
    CHECK(task_from_id("binary-ext", "imdb").name == "imdb");
    CHECK(schema_for(task_from_id("binary-ext")) == CorpusSchema::binary);
}

TEST_CASE("vocabulary construction", "[data]") {
    const std::vector<std::string> texts{"a b", "a"};
    const auto v = Vocabulary::build(texts, 100);
    CHECK(v.size() == 6);
    CHECK(v.id("a") == 4);
    CHECK(v.id("b") == 5);

    CHECK(Vocabulary::build(texts, 5).size() == 5);
    CHECK(Vocabulary::build(texts, 5).id("b") == Vocabulary::kUnk);

    const std::vector<std::string> tie{"y x"};
    const auto t = Vocabulary::build(tie, 10);
    CHECK(t.id("x") < t.id("y"));
}

TEST_CASE("vocabulary files and round trip", "[data][property]") {
    const auto v = Vocabulary::build(synth_corpus(2, 200, kReferencePriors), 128);
    for (std::size_t id = Vocabulary::kNumSpecials; id < v.size(); ++id) CHECK(v.id(v.token(id)) == id);

    const auto path = std::filesystem::temp_directory_path() / "fuseformer_vocab.txt";
    v.save(path);
    std::ifstream in(path);
    std::string first;
    std::getline(in, first);
    CHECK(first == v.token(Vocabulary::kNumSpecials));
    CHECK(Vocabulary::load(path) == v);
    std::filesystem::remove(path);
}

TEST_CASE("tokenize examples", "[data]") {
    const std::vector<std::string> texts{"a b"};
    const auto v = Vocabulary::build(texts, 10);
    const auto t = tokenize("a b", v, 5);
    CHECK(t.ids == std::vector<std::size_t>{Vocabulary::kCls, v.id("a"), v.id("b"), Vocabulary::kSep,
                                            Vocabulary::kPad});
    CHECK(t.mask == std::vector<int>{1, 1, 1, 1, 0});

    const auto e = tokenize("", v, 4);
    CHECK(e.ids == std::vector<std::size_t>{Vocabulary::kCls, Vocabulary::kSep, Vocabulary::kPad, Vocabulary::kPad});

    CHECK(tokenize("zzz", v, 4).ids[1] == Vocabulary::kUnk);
}

TEST_CASE("tokenize is length-safe", "[data][property]") {
    const Corpus c = synth_corpus(4, 300, kReferencePriors);
    const auto v = Vocabulary::build(c, 64);
    for (std::size_t max_len : {2u, 5u, 9u, 32u})
        for (const auto& ex : c) {
            const auto t = tokenize(ex.text, v, max_len);
            const auto words = split_whitespace(ex.text).size();
            CHECK(t.ids.size() == max_len);
            CHECK(t.mask.size() == max_len);
            CHECK(static_cast<std::size_t>(std::count(t.mask.begin(), t.mask.end(), 1)) ==
                  std::min(words + 2, max_len));
        }
}

TEST_CASE("class statistics", "[data]") {
    Corpus c;
    for (int i = 0; i < 100; ++i) c.push_back(with_emotions({i < 52 ? 1.0 : 0.0, 0, 0, 0, 0, i < 8 ? 1.0 : 0.0}));
    const auto s = class_statistics(c, task_from_id("emotion"));
    CHECK(s.positives[0] == 52);
    CHECK(s.negatives[0] == 48);
    CHECK(s.positives[5] == 8);
    CHECK(s.positives[1] == 0);
    for (std::size_t k = 0; k < 6; ++k) CHECK(s.positives[k] + s.negatives[k] == c.size());

    const auto seven = class_statistics(synth_corpus(5, 300, kReferencePriors), task_from_id("sent7"));
    REQUIRE(seven.positives.size() == 7);
    std::size_t total = 0;
    for (std::size_t k = 0; k < 7; ++k) {
        CHECK(seven.positives[k] + seven.negatives[k] == 300);
        total += seven.positives[k];
    }
    CHECK(total == 300);
}

TEST_CASE("synthetic corpora", "[data]") {
    const auto a = synth_corpus(7, 1000, kReferencePriors);
    const auto s = class_statistics(a, task_from_id("emotion"));
    CHECK(std::abs(static_cast<double>(s.positives[3]) / 1000.0 - 0.10) <= 0.03);
    CHECK(synth_corpus(7, 1000, kReferencePriors) == a);
    CHECK(to_jsonl(a[0]) == to_jsonl(synth_corpus(7, 1000, kReferencePriors)[0]));

    const auto half = class_statistics(synth_corpus(8, 4000, {0.5, 0.5, 0.5, 0.5, 0.5, 0.5}), task_from_id("emotion"));
    for (auto p : half.positives) CHECK(std::abs(static_cast<double>(p) / 4000.0 - 0.5) <= 0.03);

    const auto b = synth_binary_corpus(9, 2000, 0.3);
    const auto bs = class_statistics(b, task_from_id("binary-ext"));
    CHECK(std::abs(static_cast<double>(bs.positives[0]) / 2000.0 - 0.3) <= 0.03);
}
