// Copyright (c) 2026, The Fuseformer Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fuseformer/adapters.hpp"
#include "fuseformer/encoder.hpp"
#include "fuseformer/errors.hpp"
#include "fuseformer/model.hpp"
#include "fuseformer/verify.hpp"
#include "test_support.hpp"

using namespace fuseformer;
using fuseformer::testing::random_tensor;

namespace {

ModelConfig desk() { return ModelConfig{}; }

/// Rows of token ids (0 = pad) to a batch; the mask follows the pads.
Batch make(const std::vector<std::vector<std::size_t>>& rows) {
    Batch b;
    b.batch_size = rows.size();
    b.seq_len = rows.front().size();
    for (const auto& r : rows)
        for (auto id : r) {
            b.token_ids.push_back(id);
            b.attention_mask.push_back(id == Vocabulary::kPad ? 0 : 1);
        }
    b.segment_ids.assign(b.token_ids.size(), 0);
    return b;
}

ParamStore encoder_store(const ModelConfig& c, std::uint64_t seed = 1) {
    ParamStore s;
    s.allocate(encoder_layout(c), seed);
    return s;
}

std::vector<double> row(const Tensor& t, std::size_t i) {
    const std::size_t w = t.numel() / t.dim(0);
    return {t.data().begin() + static_cast<std::ptrdiff_t>(i * w), t.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * w)};
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    REQUIRE(a.size() == b.size());
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

} // namespace

TEST_CASE("embedding of identical rows is identical", "[encoder]") {
    const auto c = desk();
    const auto store = encoder_store(c);
    const auto e = embed(make({{2, 7, 9, 3}, {2, 7, 9, 3}}), EncoderParams::bind(store, c), c);
    CHECK(e.shape() == Shape{2, 4, 64});
    CHECK(row(e, 0) == row(e, 1));

    auto bad = make({{2, 600, 3}});
    CHECK_THROWS_AS(embed(bad, EncoderParams::bind(store, c), c), ContractError);
}

TEST_CASE("attention with equal keys is uniform over unmasked positions", "[encoder]") {
    auto c = desk();
    c.num_layers = 1;
    auto store = encoder_store(c);
    auto p = EncoderParams::bind(store, c);
    for (double& x : p.layers[0].key_w.mutable_data()) x = 0;
    std::mt19937_64 rng(2);
    const Tensor h = random_tensor(rng, {1, 5, 64});
    const AttentionMask mask{1, 5, {1, 1, 1, 0, 0}};
    const auto out = multi_head_attention(h, mask, p.layers[0], c);
    for (std::size_t hd = 0; hd < c.num_heads; ++hd)
        for (std::size_t q = 0; q < 5; ++q)
            for (std::size_t k = 0; k < 5; ++k) {
                const double w = out.probs.data()[(hd * 5 + q) * 5 + k];
                CHECK(std::abs(w - (k < 3 ? 1.0 / 3.0 : 0.0)) <= 1e-12);
            }
}

TEST_CASE("attention with a single unmasked key attends only to it", "[encoder]") {
    const auto c = desk();
    const auto store = encoder_store(c);
    const auto p = EncoderParams::bind(store, c);
    std::mt19937_64 rng(3);
    const Tensor h = random_tensor(rng, {1, 4, 64});
    const auto out = multi_head_attention(h, {1, 4, {0, 0, 1, 0}}, p.layers[0], c);
    for (std::size_t hd = 0; hd < c.num_heads; ++hd)
        for (std::size_t q = 0; q < 4; ++q) CHECK(std::abs(out.probs.data()[(hd * 4 + q) * 4 + 2] - 1.0) <= 1e-6);
}

TEST_CASE("encode composes embed and layer forwards", "[encoder]") {
    auto c = desk();
    c.num_layers = 1;
    const auto store = encoder_store(c);
    const auto p = EncoderParams::bind(store, c);
    const Batch b = make({{2, 10, 11, 3, 0}, {2, 12, 3, 0, 0}});
    const auto enc = encode(b, p, {}, c);
    const auto manual = encoder_layer_forward(embed(b, p, c), mask_of(b), p.layers[0], LayerSlot{}, c).hidden;
    CHECK(max_abs_diff(enc.hidden.data(), manual.data()) == 0.0);
    CHECK(enc.cls.shape() == Shape{2, 64});
    CHECK(row(enc.cls, 1) == std::vector<double>(manual.data().begin() + 5 * 64, manual.data().begin() + 6 * 64));
}

TEST_CASE("encoder properties", "[encoder][property]") {
    const auto c = desk();
    const auto store = encoder_store(c, 9);
    const auto p = EncoderParams::bind(store, c);

    SECTION("permuting the batch permutes the outputs") {
        const auto a = encode(make({{2, 5, 6, 7, 3}, {2, 8, 3, 0, 0}, {2, 9, 9, 3, 0}}), p, {}, c);
        const auto b = encode(make({{2, 9, 9, 3, 0}, {2, 5, 6, 7, 3}, {2, 8, 3, 0, 0}}), p, {}, c);
        CHECK(max_abs_diff(row(a.cls, 0), row(b.cls, 1)) <= 1e-12);
        CHECK(max_abs_diff(row(a.cls, 1), row(b.cls, 2)) <= 1e-12);
        CHECK(max_abs_diff(row(a.cls, 2), row(b.cls, 0)) <= 1e-12);
    }
    SECTION("appending padding leaves [CLS] unchanged") {
        const auto a = encode(make({{2, 5, 6, 3}}), p, {}, c);
        const auto b = encode(make({{2, 5, 6, 3, 0, 0, 0}}), p, {}, c);
        CHECK(max_abs_diff(a.cls.data(), b.cls.data()) <= 1e-9);
    }
    SECTION("encode is deterministic") {
        const auto b = make({{2, 5, 6, 3}, {2, 40, 3, 0}});
        const auto again = encoder_store(c, 9);
        CHECK(max_abs_diff(encode(b, p, {}, c).hidden.data(),
                           encode(b, EncoderParams::bind(again, c), {}, c).hidden.data()) == 0.0);
    }
}

TEST_CASE("adapter examples", "[adapter]") {
    std::mt19937_64 rng(4);
    const Tensor h = random_tensor(rng, {2, 3, 8});
    AdapterLayer a{random_tensor(rng, {8, 4}), random_tensor(rng, {4}), Tensor::zeros({4, 8}), Tensor::zeros({8})};
    const auto out = adapter_forward(h, a);
    CHECK(out.shape() == h.shape());
    CHECK(max_abs_diff(out.data(), h.data()) == 0.0);

    ModelConfig c;
    c.hidden_size = 8;
    c.num_heads = 2;
    c.reduction_factor = 2;
    c.num_layers = 1;
    CHECK(c.bottleneck() == 4);
    CHECK(layout_numel(adapter_layout(c, "t")) == 8 * 4 + 4 + 4 * 8 + 8);
    CHECK(layout_numel(adapter_layout(c, "t")) == 76);
}

TEST_CASE("fusion examples", "[adapter][fusion]") {
    std::mt19937_64 rng(5);
    const Tensor h = random_tensor(rng, {2, 3, 8});
    const Tensor a = random_tensor(rng, {2, 3, 8});
    const FusionLayer f{random_tensor(rng, {8, 8}), random_tensor(rng, {8, 8}), random_tensor(rng, {8, 8})};
    const auto expected = add(matmul(reshape(a, {6, 8}), f.value), reshape(h, {6, 8}));

    const auto same = fusion_forward(h, {a, a, a}, f);
    CHECK(max_abs_diff(same.output.data(), expected.data()) <= 1e-12);

    const auto one = fusion_forward(h, {a}, f);
    for (double w : one.weights.data()) CHECK(w == 1.0);
    CHECK(max_abs_diff(one.output.data(), expected.data()) <= 1e-12);

    const auto mixed = fusion_forward(h, {a, random_tensor(rng, {2, 3, 8}), random_tensor(rng, {2, 3, 8})}, f);
    CHECK(mixed.weights.shape() == Shape{2, 3, 3});
    for (std::size_t pos = 0; pos < 6; ++pos) {
        double s = 0;
        for (std::size_t t = 0; t < 3; ++t) {
            CHECK(mixed.weights.data()[pos * 3 + t] >= 0.0);
            s += mixed.weights.data()[pos * 3 + t];
        }
        CHECK(std::abs(s - 1.0) <= 1e-12);
    }
    CHECK_THROWS_AS(fusion_forward(h, {}, f), ContractError);
    CHECK_THROWS_AS(fusion_forward(h, {random_tensor(rng, {2, 4, 8})}, f), DimensionError);
}

TEST_CASE("attach modes", "[adapter]") {
    const ModelConfig c;
    std::vector<std::string> tokens;
    for (int i = 0; i < 40; ++i) tokens.push_back("t" + std::to_string(i));
    Model m(c, Vocabulary::from_tokens(tokens));
    m.init_encoder(1);
    m.add_adapter("s2", 2);
    m.add_adapter("s7", 3);
    m.add_adapter("emo", 4);
    const Batch b = make({{2, 5, 6, 3}, {2, 8, 3, 0}});
    const auto p = EncoderParams::bind(m.params(), c);

    const auto none = attach(m.params(), c, SlotMode::none());
    CHECK(max_abs_diff(encode(b, p, none, c).hidden.data(), encode(b, p, {}, c).hidden.data()) == 0.0);

    const auto single = attach(m.params(), c, SlotMode::single("emo"));
    REQUIRE(single.size() == c.num_layers);
    CHECK(single[0].adapters.size() == 1);
    CHECK(single[0].adapters[0].down_w.node() == m.params().at("adapter.emo.layer.0.down.weight").node());

    CHECK_THROWS_AS(attach(m.params(), c, SlotMode::fusion({"s2", "s7", "emo"})), ConfigError);
    m.add_fusion({"s2", "s7", "emo"}, 5);
    const auto fused = attach(m.params(), c, SlotMode::fusion({"s2", "s7", "emo"}));
    CHECK(fused[1].adapters.size() == 3);
    const auto out = encode(b, p, fused, c);
    REQUIRE(out.fusion_weights.size() == c.num_layers);
    CHECK(out.fusion_weights[0].shape() == Shape{2, 4, 3});
    CHECK_THROWS_AS(attach(m.params(), c, SlotMode::single("missing")), ConfigError);
}

TEST_CASE("trainable groups per stage", "[adapter]") {
    CHECK(group_trainable(Stage::adapter_training("emo"), "adapter:emo"));
    CHECK(group_trainable(Stage::adapter_training("emo"), "head:emo"));
    CHECK_FALSE(group_trainable(Stage::adapter_training("emo"), "adapter:s2"));
    CHECK_FALSE(group_trainable(Stage::adapter_training("emo"), "encoder"));
    CHECK(group_trainable(Stage::fusion_training("emo"), "fusion"));
    CHECK_FALSE(group_trainable(Stage::fusion_training("emo"), "adapter:emo"));
    CHECK_FALSE(group_trainable(Stage::fusion_training("emo"), "encoder"));
    CHECK(group_trainable(Stage::full_finetune("emo"), "encoder"));
}

TEST_CASE("parameter accounting", "[adapter][count]") {
    const auto full = reference_base_config();
    const auto single = count_parameters(full, SlotKind::single, 1, 6);
    const auto f3 = count_parameters(full, SlotKind::fusion, 3, 6);
    const auto base = count_parameters(full, SlotKind::none, 0, 6);
    CHECK(std::abs(static_cast<double>(single.trainable) - 1.5e6) <= 0.1e6);
    CHECK(std::abs(static_cast<double>(f3.trainable) - 21.8e6) <= 0.1e6);
    CHECK(base.total == base.trainable);
    CHECK(f3.trainable == count_parameters(full, SlotKind::fusion, 5, 6).trainable);
    for (const ModelConfig& c : {ModelConfig{}, full}) {
        const std::size_t per_task = layout_numel(adapter_layout(c, "x"));
        CHECK(count_parameters(c, SlotKind::fusion, 5, 6).total - count_parameters(c, SlotKind::fusion, 3, 6).total ==
              2 * per_task);
    }
}

TEST_CASE("parameter blocks", "[encoder]") {
    CHECK(param_block("encoder.embeddings.token") == "embeddings");
    CHECK(param_block("encoder.layer.1.attention.query.weight") == "attention");
    CHECK(param_block("encoder.layer.1.attention.norm.gamma") == "attention");
    CHECK(param_block("encoder.layer.0.ffn.in.weight") == "feed_forward");
    CHECK(param_block("adapter.emo.layer.0.up.bias") == "adapter");
    CHECK(param_block("fusion.layer.0.key") == "fusion");
    CHECK(param_block("head.emo.linear1.weight") == "head");
}

TEST_CASE("whole-model gradients match finite differences", "[encoder][fd]") {
    FdOptions opt;
    opt.max_coords_per_tensor = 6;
    const auto r = check_model_gradients(ModelConfig{}, opt);
    CHECK(r.pass);
    std::vector<std::string> names;
    for (const auto& b : r.blocks) names.push_back(b.block);
    CHECK(names == std::vector<std::string>{"embeddings", "attention", "feed_forward", "adapter", "fusion", "head"});
    for (const auto& b : r.blocks) CHECK(b.max_rel_error < 1e-4);
}
