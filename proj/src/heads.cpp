// Copyright (c) 2026, The Fuseformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "fuseformer/heads.hpp"

#include <cmath>

#include "fuseformer/errors.hpp"

namespace fuseformer {

namespace {

struct LossShape {
    std::size_t rows = 0;
    std::size_t cols = 0;
    double factor = 1.0;
};

LossShape check_sigmoid_loss(const char* op, const Tensor& logits, std::span<const double> targets,
                             Reduction reduction) {
    if (!logits.defined() || logits.rank() != 2)
        throw DimensionError(std::string(op) + ": logits must be [B×C]");
    if (targets.size() != logits.numel())
        throw DimensionError(std::string(op) + ": " + std::to_string(targets.size()) + " targets for logits " +
                             shape_str(logits.shape()));
    for (double y : targets)
        if (y != 0.0 && y != 1.0) throw ContractError(std::string(op) + ": target " + std::to_string(y) + " is not binary");
    LossShape s{logits.dim(0), logits.dim(1), 1.0};
    if (reduction == Reduction::batch_mean) s.factor = 1.0 / static_cast<double>(s.rows);
    return s;
}

/// Scales a per-element gradient buffer by the upstream scalar gradient.
BackwardFn elementwise_backward(std::shared_ptr<std::vector<double>> dlogits) {
    return [dlogits](Node& self) {
        auto& in = self.inputs[0];
        if (!in->requires_grad) return;
        auto& g = in->grad_buffer();
        const double up = self.grad[0];
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += up * (*dlogits)[i];
    };
}

} // namespace

Layout head_layout(const ModelConfig& config, const std::string& task, std::size_t num_labels) {
    if (num_labels == 0) throw ConfigError("head needs at least one label");
    const std::string g = "head:" + task;
    const std::string p = "head." + task + ".";
    const std::size_t h = config.hidden_size;
    return {
        {p + "linear1.weight", {h, h}, g, true, InitKind::normal},
        {p + "linear1.bias", {h}, g, false, InitKind::zeros},
        {p + "linear2.weight", {h, num_labels}, g, true, InitKind::normal},
        {p + "linear2.bias", {num_labels}, g, false, InitKind::zeros},
    };
}

HeadParams HeadParams::bind(const ParamStore& s, const std::string& task) {
    const std::string p = "head." + task + ".";
    if (!s.contains(p + "linear1.weight")) throw ConfigError("no head for task '" + task + "'");
    HeadParams h;
    h.task = task;
    h.w1 = s.at(p + "linear1.weight");
    h.b1 = s.at(p + "linear1.bias");
    h.w2 = s.at(p + "linear2.weight");
    h.b2 = s.at(p + "linear2.bias");
    h.num_labels = h.w2.dim(1);
    return h;
}

Tensor head_forward(const Tensor& cls, const HeadParams& head) {
    return linear(tanh(linear(cls, head.w1, head.b1)), head.w2, head.b2);
}

PosWeights pos_weights(const ClassStats& stats) {
    PosWeights out;
    out.w.resize(stats.positives.size());
    for (std::size_t c = 0; c < stats.positives.size(); ++c) {
        if (stats.positives[c] == 0) {
            out.w[c] = static_cast<double>(stats.total);
            out.warnings.push_back("class '" + (c < stats.names.size() ? stats.names[c] : std::to_string(c)) +
                                   "' has no positive training samples; weight capped at " +
                                   std::to_string(stats.total));
        } else {
            out.w[c] = static_cast<double>(stats.negatives[c]) / static_cast<double>(stats.positives[c]);
        }
    }
    return out;
}

Reduction parse_reduction(std::string_view name) {
    if (name == "batch-mean") return Reduction::batch_mean;
    if (name == "sum") return Reduction::sum;
    throw ConfigError("unknown loss reduction '" + std::string(name) + "' (expected batch-mean|sum)");
}

std::string reduction_name(Reduction r) { return r == Reduction::sum ? "sum" : "batch-mean"; }

Tensor weighted_bce(const Tensor& logits, std::span<const double> targets, std::span<const double> weights,
                    Reduction reduction) {
    const auto s = check_sigmoid_loss("weighted_bce", logits, targets, reduction);
    if (weights.size() != s.cols)
        throw DimensionError("weighted_bce: " + std::to_string(weights.size()) + " class weights for " +
                             std::to_string(s.cols) + " classes");
    for (double w : weights)
        if (!(w >= 0.0) || !std::isfinite(w)) throw ContractError("weighted_bce: weights must be finite and nonnegative");
    const auto x = logits.data();
    auto dx = std::make_shared<std::vector<double>>(x.size());
    double total = 0;
    for (std::size_t n = 0; n < s.rows; ++n) {
        double row = 0;
        for (std::size_t c = 0; c < s.cols; ++c) {
            const std::size_t i = n * s.cols + c;
            const double y = targets[i];
            const double w = weights[c];
            row += w * y * softplus(-x[i]) + (1.0 - y) * softplus(x[i]);
            (*dx)[i] = s.factor * (-w * y * stable_sigmoid(-x[i]) + (1.0 - y) * stable_sigmoid(x[i]));
        }
        total += row;
    }
    return make_result("weighted_bce", {}, {total * s.factor}, {logits}, elementwise_backward(dx));
}

Tensor bce(const Tensor& logits, std::span<const double> targets, Reduction reduction) {
    const auto s = check_sigmoid_loss("bce", logits, targets, reduction);
    const auto x = logits.data();
    auto dx = std::make_shared<std::vector<double>>(x.size());
    double total = 0;
    for (std::size_t n = 0; n < s.rows; ++n) {
        double row = 0;
        for (std::size_t c = 0; c < s.cols; ++c) {
            const std::size_t i = n * s.cols + c;
            const double y = targets[i];
            row += y * softplus(-x[i]) + (1.0 - y) * softplus(x[i]);
            (*dx)[i] = s.factor * (stable_sigmoid(x[i]) - y);
        }
        total += row;
    }
    return make_result("bce", {}, {total * s.factor}, {logits}, elementwise_backward(dx));
}

Tensor focal_multilabel(const Tensor& logits, std::span<const double> targets, double gamma,
                        std::optional<double> alpha, Reduction reduction) {
    const auto s = check_sigmoid_loss("focal", logits, targets, reduction);
    if (!(gamma >= 0.0)) throw ContractError("focal: gamma must be nonnegative");
    if (alpha && !(*alpha > 0.0 && *alpha <= 1.0)) throw ContractError("focal: alpha must lie in (0, 1]");
    const auto x = logits.data();
    auto dx = std::make_shared<std::vector<double>>(x.size());
    double total = 0;
    for (std::size_t n = 0; n < s.rows; ++n) {
        double row = 0;
        for (std::size_t c = 0; c < s.cols; ++c) {
            const std::size_t i = n * s.cols + c;
            const bool positive = targets[i] == 1.0;
            // z is the logit of the true outcome, so p_t = σ(z).
            const double z = positive ? x[i] : -x[i];
            const double log_p = -softplus(-z);
            const double p = stable_sigmoid(z);
            const double q = stable_sigmoid(-z); // 1 − p_t
            const double a = alpha ? (positive ? *alpha : 1.0 - *alpha) : 1.0;
            const double mod = std::pow(q, gamma);
            row += -a * mod * log_p;
            const double dz = a * mod * (gamma * p * log_p - q);
            (*dx)[i] = s.factor * (positive ? dz : -dz);
        }
        total += row;
    }
    return make_result("focal", {}, {total * s.factor}, {logits}, elementwise_backward(dx));
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets, Reduction reduction) {
    if (!logits.defined() || logits.rank() != 2) throw DimensionError("cross_entropy: logits must be [B×K]");
    const std::size_t rows = logits.dim(0), k = logits.dim(1);
    if (targets.size() != rows)
        throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                             std::to_string(rows) + " rows");
    for (int t : targets)
        if (t < 0 || static_cast<std::size_t>(t) >= k)
            throw ContractError("cross_entropy: class id " + std::to_string(t) + " outside [0, " + std::to_string(k) + ")");
    const double factor = reduction == Reduction::batch_mean ? 1.0 / static_cast<double>(rows) : 1.0;
    const auto x = logits.data();
    auto dx = std::make_shared<std::vector<double>>(x.size());
    double total = 0;
    for (std::size_t n = 0; n < rows; ++n) {
        const double* r = x.data() + n * k;
        double mx = r[0];
        for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, r[j]);
        double z = 0;
        for (std::size_t j = 0; j < k; ++j) z += std::exp(r[j] - mx);
        const double lse = mx + std::log(z);
        const auto t = static_cast<std::size_t>(targets[n]);
        total += lse - r[t];
        for (std::size_t j = 0; j < k; ++j)
            (*dx)[n * k + j] = factor * (std::exp(r[j] - lse) - (j == t ? 1.0 : 0.0));
    }
    return make_result("cross_entropy", {}, {total * factor}, {logits}, elementwise_backward(dx));
}

} // namespace fuseformer
