// Copyright (c) 2026, The Fuseformer Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <numeric>
#include <random>

#include "fuseformer/errors.hpp"
#include "fuseformer/metrics.hpp"
#include "metric_oracle.hpp"

using namespace fuseformer;
using fuseformer::testing::naive_multilabel;

namespace {

struct Case {
    std::vector<double> logits, labels;
};

Case random_case(std::mt19937_64& rng, std::size_t n, std::size_t c) {
    std::normal_distribution<double> z(0, 2);
    std::uniform_real_distribution<double> prior(0.02, 0.6);
    Case k;
    std::vector<double> p(c);
    for (auto& x : p) x = prior(rng);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) {
            k.logits.push_back(z(rng));
            k.labels.push_back(std::bernoulli_distribution(p[j])(rng) ? 1.0 : 0.0);
        }
    return k;
}

} // namespace

TEST_CASE("confusion examples", "[metrics]") {
    CHECK(confusion(std::vector<int>{1, 0}, std::vector<int>{1, 0}) == Confusion{1, 0, 1, 0});
    CHECK(confusion(std::vector<int>{1, 1}, std::vector<int>{0, 0}).fp == 2);
    CHECK_THROWS_AS(confusion(std::vector<int>{1}, std::vector<int>{1, 0}), ContractError);

    std::mt19937_64 rng(1);
    std::bernoulli_distribution coin(0.4);
    std::vector<int> p(1000), y(1000);
    for (std::size_t i = 0; i < 1000; ++i) {
        p[i] = coin(rng);
        y[i] = coin(rng);
    }
    Confusion brute;
    for (std::size_t i = 0; i < 1000; ++i) {
        if (p[i] && y[i]) ++brute.tp;
        if (p[i] && !y[i]) ++brute.fp;
        if (!p[i] && !y[i]) ++brute.tn;
        if (!p[i] && y[i]) ++brute.fn;
    }
    CHECK(confusion(p, y) == brute);
}

TEST_CASE("accuracy and F1 examples", "[metrics]") {
    const auto c = confusion(std::vector<int>{1, 0, 0, 0}, std::vector<int>{1, 1, 0, 0});
    CHECK(binary_accuracy(c) == 0.75);
    CHECK(f1_score(c.tp, c.fp, c.fn) == Catch::Approx(2.0 / 3.0).epsilon(1e-15));
    const auto perfect = confusion(std::vector<int>{1, 0, 1}, std::vector<int>{1, 0, 1});
    CHECK(binary_accuracy(perfect) == 1.0);
    CHECK(f1_score(perfect.tp, perfect.fp, perfect.fn) == 1.0);
    const auto none = confusion(std::vector<int>{0, 0}, std::vector<int>{0, 0});
    CHECK(binary_accuracy(none) == 1.0);
    CHECK(f1_score(none.tp, none.fp, none.fn) == 0.0);
    CHECK_THROWS_AS(binary_accuracy(Confusion{}), ContractError);
}

TEST_CASE("emotion report matches a naive implementation", "[metrics][oracle]") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto k = random_case(rng, 200, 6);
        const auto r = emotion_report(k.logits, k.labels);
        const auto o = naive_multilabel(k.logits, k.labels, 200, 6);
        REQUIRE(r.classes.size() == 6);
        for (std::size_t c = 0; c < 6; ++c) {
            REQUIRE(r.classes[c].accuracy == o.classes[c].accuracy);
            REQUIRE(r.classes[c].f1 == o.classes[c].f1);
            REQUIRE(r.classes[c].support == o.classes[c].support);
        }
        REQUIRE(r.mean_accuracy == o.mean_accuracy);
        REQUIRE(r.weighted_f1 == o.weighted_f1);
    }
}

TEST_CASE("threshold sits exactly at logit zero", "[metrics]") {
    const std::vector<double> logits{-1e-300, 0.0, 1e-300}, labels{1, 1, 1};
    const auto r = multilabel_report(logits, labels, 1, {"x"}, 0.5);
    CHECK(r.classes[0].accuracy == Catch::Approx(2.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("mean accuracy is the unweighted class mean", "[metrics]") {
    const std::vector<double> tbje{66.0, 73.9, 81.9, 89.2, 86.5, 90.6};
    const double mean = std::accumulate(tbje.begin(), tbje.end(), 0.0) / 6.0;
    CHECK(mean == Catch::Approx(81.35).epsilon(1e-12));
    CHECK(std::abs(mean - 81.5) <= 0.2);

    // Same per-class accuracies through the report: one class varies, the
    // rest are perfect, so the mean of six known accuracies is exercised.
    std::vector<double> logits, labels;
    for (int i = 0; i < 10; ++i)
        for (int c = 0; c < 6; ++c) {
            labels.push_back(c == 0 && i < 5 ? 1.0 : 0.0);
            logits.push_back(c == 0 && i < 3 ? 1.0 : -1.0);
        }
    const auto r = emotion_report(logits, labels);
    CHECK(r.classes[0].accuracy == 0.8);
    CHECK(r.mean_accuracy == Catch::Approx((0.8 + 5.0) / 6.0).epsilon(1e-15));
}

TEST_CASE("weighted F1 with a single supported class", "[metrics]") {
    std::vector<double> logits, labels;
    for (int i = 0; i < 8; ++i)
        for (int c = 0; c < 6; ++c) {
            const bool pos = c == 2 && i % 2 == 0;
            labels.push_back(pos ? 1.0 : 0.0);
            logits.push_back(pos ? 3.0 : (c == 4 && i == 1 ? 2.0 : -3.0));
        }
    const auto r = emotion_report(logits, labels);
    CHECK(r.classes[2].f1 == 1.0);
    CHECK(r.weighted_f1 == r.classes[2].f1);
}

TEST_CASE("multiclass accuracy", "[metrics]") {
    const std::vector<int> y{0, 1, 2, 3, 4, 5, 6};
    CHECK(multiclass_accuracy(y, y) == 1.0);
    CHECK_THROWS_AS(multiclass_accuracy(std::vector<int>{7}, std::vector<int>{0}), ContractError);

    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> d(0, 6);
    std::vector<int> p(100000), l(100000);
    std::size_t same = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = d(rng);
        l[i] = d(rng);
        same += p[i] == l[i];
    }
    const double acc = multiclass_accuracy(p, l);
    CHECK(acc == static_cast<double>(same) / 100000.0);
    CHECK(std::abs(acc - 1.0 / 7.0) <= 0.01);

    std::vector<double> logits(7 * 7, 0.0);
    for (int i = 0; i < 7; ++i) logits[static_cast<std::size_t>(i * 7 + (i + 1) % 7)] = 1.0;
    CHECK(multiclass_report(logits, y, 7).accuracy == 0.0);
}

TEST_CASE("metric properties", "[metrics][property]") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 100; ++trial) {
        const auto k = random_case(rng, 60, 6);
        const auto r = emotion_report(k.logits, k.labels);

        std::vector<std::size_t> order(60);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        std::vector<double> pl, py;
        for (auto i : order)
            for (std::size_t c = 0; c < 6; ++c) {
                pl.push_back(k.logits[i * 6 + c]);
                py.push_back(k.labels[i * 6 + c]);
            }
        const auto s = emotion_report(pl, py);
        CHECK(s.mean_accuracy == r.mean_accuracy);
        CHECK(s.weighted_f1 == r.weighted_f1);

        double lo = 1, hi = 0;
        for (const auto& c : r.classes)
            if (c.support > 0) {
                lo = std::min(lo, c.f1);
                hi = std::max(hi, c.f1);
            }
        if (hi >= lo) {
            CHECK(r.weighted_f1 >= lo - 1e-15);
            CHECK(r.weighted_f1 <= hi + 1e-15);
        }

        std::vector<double> l1, y1;
        for (std::size_t i = 0; i < 60; ++i) {
            l1.push_back(k.logits[i * 6]);
            y1.push_back(k.labels[i * 6]);
        }
        const auto single = multilabel_report(l1, y1, 1, {"joy"});
        CHECK(single.classes[0].accuracy == r.classes[0].accuracy);
        CHECK(single.classes[0].f1 == r.classes[0].f1);
    }
}

TEST_CASE("run aggregation", "[metrics]") {
    std::mt19937_64 rng(5);
    std::vector<MetricsReport> runs;
    for (int i = 0; i < 3; ++i) {
        const auto k = random_case(rng, 50, 6);
        runs.push_back(emotion_report(k.logits, k.labels));
    }
    CHECK(mean_report({runs[0]}).to_json() == runs[0].to_json());
    CHECK(mean_report({runs[1], runs[1], runs[1]}).to_json() == runs[1].to_json());
    const auto m = mean_report(runs);
    CHECK(std::abs(m.mean_accuracy - (runs[0].mean_accuracy + runs[1].mean_accuracy + runs[2].mean_accuracy) / 3) <=
          1e-12);
    CHECK_THROWS_AS(mean_report({}), ContractError);
}

TEST_CASE("report serialization", "[metrics]") {
    std::mt19937_64 rng(6);
    const auto k = random_case(rng, 40, 6);
    auto r = emotion_report(k.logits, k.labels);
    r.split = "test";
    CHECK(MetricsReport::from_json(r.to_json()).to_json() == r.to_json());
    const std::string table = r.to_table();
    std::size_t pos = 0;
    for (const char* col : {"Joy", "Sadness", "Anger", "Surprise", "Disgust", "Fear", "Overall"}) {
        const auto at = table.find(col);
        REQUIRE(at != std::string::npos);
        CHECK(at >= pos);
        pos = at;
    }
    CHECK(table.find("A/F1") != std::string::npos);
}
