// Copyright (c) 2026, The Fuseformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "fuseformer/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "fuseformer/data.hpp"
#include "fuseformer/errors.hpp"
#include "fuseformer/tensor.hpp"

namespace fuseformer {

namespace {

constexpr const char* kSentimentNames[] = {"-3", "-2", "-1", "0", "+1", "+2", "+3"};

} // namespace

Confusion confusion(std::span<const int> preds, std::span<const int> labels) {
    if (preds.size() != labels.size())
        throw ContractError("confusion: " + std::to_string(preds.size()) + " predictions for " +
                            std::to_string(labels.size()) + " labels");
    Confusion c;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const bool p = preds[i] != 0, y = labels[i] != 0;
        if (p && y) ++c.tp;
        else if (p) ++c.fp;
        else if (y) ++c.fn;
        else ++c.tn;
    }
    return c;
}

double binary_accuracy(const Confusion& c) {
    if (c.total() == 0) throw ContractError("binary_accuracy: no samples");
    return static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
}

double f1_score(std::size_t tp, std::size_t fp, std::size_t fn) {
    const std::size_t den = 2 * tp + fp + fn;
    return den == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(den);
}

double precision(const Confusion& c) {
    return c.tp + c.fp == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
}

double recall(const Confusion& c) {
    return c.tp + c.fn == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
}

double multiclass_accuracy(std::span<const int> preds, std::span<const int> labels, int num_classes) {
    if (preds.size() != labels.size()) throw ContractError("multiclass_accuracy: length mismatch");
    if (preds.empty()) throw ContractError("multiclass_accuracy: no samples");
    std::size_t hit = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        for (int v : {preds[i], labels[i]})
            if (v < 0 || v >= num_classes)
                throw ContractError("multiclass_accuracy: class id " + std::to_string(v) + " out of range");
        hit += preds[i] == labels[i];
    }
    return static_cast<double>(hit) / static_cast<double>(preds.size());
}

MetricsReport multilabel_report(std::span<const double> logits, std::span<const double> labels, std::size_t num_classes,
                                const std::vector<std::string>& names, double threshold) {
    if (num_classes == 0 || logits.size() != labels.size() || logits.size() % num_classes != 0)
        throw ContractError("multilabel_report: logits/labels do not form an N×C grid");
    const std::size_t n = logits.size() / num_classes;
    if (n == 0) throw ContractError("multilabel_report: no samples");
    if (!(threshold > 0.0 && threshold < 1.0)) throw ContractError("multilabel_report: threshold must lie in (0, 1)");
    // σ(x) >= t  <=>  x >= log(t / (1 - t)); comparing logits avoids σ rounding to t near the cut.
    const double cut = std::log(threshold / (1.0 - threshold));
    MetricsReport r;
    r.task_kind = num_classes == 1 ? "binary" : "multilabel" + std::to_string(num_classes);
    r.examples = n;
    std::vector<int> p(n), y(n);
    double support_sum = 0, weighted = 0, acc_sum = 0;
    for (std::size_t c = 0; c < num_classes; ++c) {
        for (std::size_t i = 0; i < n; ++i) {
            p[i] = logits[i * num_classes + c] >= cut ? 1 : 0;
            y[i] = labels[i * num_classes + c] > 0.5 ? 1 : 0;
        }
        const Confusion cm = confusion(p, y);
        ClassMetrics m;
        m.name = c < names.size() ? names[c] : std::to_string(c);
        m.accuracy = binary_accuracy(cm);
        m.precision = precision(cm);
        m.recall = recall(cm);
        m.f1 = f1_score(cm.tp, cm.fp, cm.fn);
        m.support = cm.tp + cm.fn;
        acc_sum += m.accuracy;
        support_sum += static_cast<double>(m.support);
        weighted += static_cast<double>(m.support) * m.f1;
        r.classes.push_back(std::move(m));
    }
    r.mean_accuracy = acc_sum / static_cast<double>(num_classes);
    r.weighted_f1 = support_sum > 0 ? weighted / support_sum : 0.0;
    r.accuracy = num_classes == 1 ? r.classes[0].accuracy : r.mean_accuracy;
    return r;
}

MetricsReport emotion_report(std::span<const double> logits, std::span<const double> labels, double threshold) {
    return multilabel_report(logits, labels, kNumEmotions, {kEmotionNames.begin(), kEmotionNames.end()}, threshold);
}

MetricsReport multiclass_report(std::span<const double> logits, std::span<const int> labels, std::size_t num_classes) {
    if (num_classes == 0 || logits.size() != labels.size() * num_classes)
        throw ContractError("multiclass_report: logits do not match labels");
    const std::size_t n = labels.size();
    std::vector<int> preds(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = logits.data() + i * num_classes;
        preds[i] = static_cast<int>(std::max_element(row, row + num_classes) - row);
    }
    MetricsReport r;
    r.task_kind = "multiclass" + std::to_string(num_classes);
    r.examples = n;
    r.accuracy = multiclass_accuracy(preds, labels, static_cast<int>(num_classes));
    r.mean_accuracy = r.accuracy;
    // One-vs-rest F1 per class, weighted by class frequency.
    double support_sum = 0, weighted = 0;
    std::vector<int> p(n), y(n);
    for (std::size_t c = 0; c < num_classes; ++c) {
        for (std::size_t i = 0; i < n; ++i) {
            p[i] = preds[i] == static_cast<int>(c);
            y[i] = labels[i] == static_cast<int>(c);
        }
        const Confusion cm = confusion(p, y);
        ClassMetrics m;
        m.name = num_classes == 7 ? kSentimentNames[c] : std::to_string(c);
        m.accuracy = binary_accuracy(cm);
        m.precision = precision(cm);
        m.recall = recall(cm);
        m.f1 = f1_score(cm.tp, cm.fp, cm.fn);
        m.support = cm.tp + cm.fn;
        support_sum += static_cast<double>(m.support);
        weighted += static_cast<double>(m.support) * m.f1;
        r.classes.push_back(std::move(m));
    }
    r.weighted_f1 = support_sum > 0 ? weighted / support_sum : 0.0;
    return r;
}

nlohmann::ordered_json MetricsReport::to_json() const {
    nlohmann::ordered_json j;
    j["task_kind"] = task_kind;
    j["split"] = split;
    j["seed"] = seed;
    j["examples"] = examples;
    j["per_class"] = nlohmann::ordered_json::array();
    for (const auto& c : classes) {
        nlohmann::ordered_json e;
        e["name"] = c.name;
        e["accuracy"] = c.accuracy;
        e["precision"] = c.precision;
        e["recall"] = c.recall;
        e["f1"] = c.f1;
        e["support"] = c.support;
        j["per_class"].push_back(std::move(e));
    }
    j["overall"] = {{"mean_accuracy", mean_accuracy}, {"weighted_f1", weighted_f1}, {"accuracy", accuracy}};
    return j;
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
    MetricsReport r;
    r.task_kind = j.at("task_kind").get<std::string>();
    r.split = j.at("split").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.examples = j.at("examples").get<std::size_t>();
    for (const auto& e : j.at("per_class"))
        r.classes.push_back({e.at("name").get<std::string>(), e.at("accuracy").get<double>(),
                             e.at("precision").get<double>(), e.at("recall").get<double>(), e.at("f1").get<double>(),
                             e.at("support").get<std::size_t>()});
    const auto& o = j.at("overall");
    r.mean_accuracy = o.at("mean_accuracy").get<double>();
    r.weighted_f1 = o.at("weighted_f1").get<double>();
    r.accuracy = o.at("accuracy").get<double>();
    return r;
}

std::string MetricsReport::to_table() const {
    auto pct = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.1f", 100.0 * v);
        return std::string(buf);
    };
    std::vector<std::string> head, cells;
    for (const auto& c : classes) {
        head.push_back(c.name);
        cells.push_back(pct(c.accuracy) + "/" + pct(c.f1));
    }
    head.emplace_back("Overall");
    cells.push_back(pct(mean_accuracy) + "/" + pct(weighted_f1));

    std::size_t width = 4;
    for (std::size_t i = 0; i < head.size(); ++i) width = std::max({width, head[i].size(), cells[i].size()});
    std::ostringstream os;
    auto row = [&](const std::string& label, const std::vector<std::string>& v) {
        char buf[16];
        std::snprintf(buf, sizeof buf, "%-6s", label.c_str());
        os << buf;
        for (const auto& s : v) os << " | " << std::string(width - s.size(), ' ') << s;
        os << '\n';
    };
    row("", head);
    row("", std::vector<std::string>(head.size(), "A/F1"));
    row(split.empty() ? "split" : split, cells);
    return os.str();
}

MetricsReport mean_report(const std::vector<MetricsReport>& runs) {
    if (runs.empty()) throw ContractError("mean_report: no runs");
    MetricsReport m = runs[0];
    const double k = static_cast<double>(runs.size());
    // Accumulate offsets from the first run so identical runs average to
    // exactly that run.
    auto avg = [&](auto field) {
        const double base = field(runs[0]);
        double s = 0;
        for (const auto& r : runs) s += field(r) - base;
        return base + s / k;
    };
    for (const auto& r : runs)
        if (r.classes.size() != m.classes.size()) throw ContractError("mean_report: runs have different classes");
    m.seed = runs[0].seed;
    m.mean_accuracy = avg([](const MetricsReport& r) { return r.mean_accuracy; });
    m.weighted_f1 = avg([](const MetricsReport& r) { return r.weighted_f1; });
    m.accuracy = avg([](const MetricsReport& r) { return r.accuracy; });
    for (std::size_t c = 0; c < m.classes.size(); ++c) {
        m.classes[c].accuracy = avg([c](const MetricsReport& r) { return r.classes[c].accuracy; });
        m.classes[c].precision = avg([c](const MetricsReport& r) { return r.classes[c].precision; });
        m.classes[c].recall = avg([c](const MetricsReport& r) { return r.classes[c].recall; });
        m.classes[c].f1 = avg([c](const MetricsReport& r) { return r.classes[c].f1; });
    }
    return m;
}

} // namespace fuseformer
