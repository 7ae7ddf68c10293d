// Copyright (c) 2026, The Fuseformer Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "fuseformer/checkpoint.hpp"
#include "fuseformer/errors.hpp"
#include "fuseformer/model.hpp"

using namespace fuseformer;
namespace fs = std::filesystem;

namespace {

Vocabulary small_vocab() {
    std::vector<std::string> t;
    for (int i = 0; i < 30; ++i) t.push_back("w" + std::to_string(i));
    return Vocabulary::from_tokens(t);
}

Model small_model(std::size_t hidden = 64, std::uint64_t encoder_seed = 1) {
    ModelConfig c;
    c.hidden_size = hidden;
    c.ff_size = 2 * hidden;
    Model m(c, small_vocab());
    m.init_encoder(encoder_seed);
    m.add_adapter("emo", 2);
    m.add_head(task_from_id("emotion", "emo"), 3);
    return m;
}

fs::path temp(const std::string& name) { return fs::temp_directory_path() / ("fuseformer_" + name); }

} // namespace

TEST_CASE("checkpoint round trip at 32-bit precision", "[checkpoint]") {
    const Model m = small_model();
    const Checkpoint c = m.to_checkpoint({{"seed", 7}});
    const auto path = temp("roundtrip.ckpt");
    save_checkpoint(path, c);
    CHECK_FALSE(fs::exists(fs::path(path.string() + ".tmp")));

    const Checkpoint back = load_checkpoint(path);
    CHECK(back.meta == c.meta);
    REQUIRE(back.tensors.size() == c.tensors.size());
    for (std::size_t i = 0; i < c.tensors.size(); ++i) {
        CHECK(back.tensors[i].name == c.tensors[i].name);
        CHECK(back.tensors[i].shape == c.tensors[i].shape);
        CHECK(std::memcmp(back.tensors[i].values.data(), c.tensors[i].values.data(), 4 * c.tensors[i].values.size()) == 0);
    }
    const Model restored = Model::from_checkpoint(back);
    for (const auto& e : m.params().entries()) {
        const auto a = e.tensor.data();
        const auto b = restored.params().at(e.spec.name).data();
        for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(static_cast<float>(a[i]) == b[i]);
    }
    CHECK(restored.vocab() == m.vocab());
    CHECK(restored.heads() == m.heads());
    fs::remove(path);
}

TEST_CASE("layout on disk", "[checkpoint]") {
    Checkpoint c;
    c.tensors.push_back({"a", {2}, {1.5f, -2.0f}});
    c.tensors.push_back({"b", {1, 1}, {3.0f}});
    const std::string bytes = encode_checkpoint(c);
    CHECK(bytes.substr(0, 8) == "AFCKPT01");
    std::uint64_t len = 0;
    for (int i = 7; i >= 0; --i) len = (len << 8) | static_cast<unsigned char>(bytes[8 + static_cast<std::size_t>(i)]);
    const auto manifest = nlohmann::json::parse(bytes.substr(16, len));
    CHECK(manifest["a"]["dtype"] == "f32");
    CHECK(manifest["a"]["offset"] == 0);
    CHECK(manifest["b"]["offset"] == 8);
    CHECK(manifest["b"]["shape"] == nlohmann::json::array({1, 1}));
    CHECK(bytes.size() == 16 + len + 12);
    std::uint32_t first = 0;
    for (int i = 3; i >= 0; --i) first = (first << 8) | static_cast<unsigned char>(bytes[16 + len + static_cast<std::size_t>(i)]);
    CHECK(std::bit_cast<float>(first) == 1.5f);
}

TEST_CASE("every truncation is rejected", "[checkpoint]") {
    const std::string bytes = encode_checkpoint(small_model().to_checkpoint());
    for (std::size_t cut : {std::size_t{0}, std::size_t{5}, std::size_t{12}, std::size_t{40}, bytes.size() / 2,
                            bytes.size() - 1})
        CHECK_THROWS_AS(decode_checkpoint(std::string_view(bytes).substr(0, cut)), LoadError);
    CHECK_THROWS_AS(decode_checkpoint(bytes + "x"), LoadError);

    std::string bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_checkpoint(bad), LoadError);
    CHECK_THROWS_AS(load_checkpoint(temp("missing.ckpt")), LoadError);
}

TEST_CASE("manifest errors name the entry", "[checkpoint]") {
    auto build = [](const nlohmann::json& manifest, std::size_t payload) {
        const std::string text = manifest.dump();
        std::string out = "AFCKPT01";
        for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((text.size() >> (8 * i)) & 0xff));
        return out + text + std::string(payload, '\0');
    };
    auto message = [](const std::string& bytes) {
        try {
            decode_checkpoint(bytes);
        } catch (const LoadError& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    const nlohmann::json ok = {{"w", {{"shape", {2}}, {"dtype", "f32"}, {"offset", 0}}}};
    CHECK(message(build(ok, 8)).empty());

    auto f64 = ok;
    f64["w"]["dtype"] = "f64";
    CHECK(message(build(f64, 8)).find("'w'") != std::string::npos);
    auto gap = ok;
    gap["w"]["offset"] = 4;
    CHECK(message(build(gap, 12)).find("'w'") != std::string::npos);
    auto shape = ok;
    shape["w"]["shape"] = "2";
    CHECK(message(build(shape, 8)).find("'w'") != std::string::npos);
    CHECK(message(build(ok, 4)).find("truncated") != std::string::npos);
    CHECK_FALSE(message(build(nlohmann::json::array(), 0)).empty());
}

TEST_CASE("shape mismatches are load errors", "[checkpoint]") {
    const Model wide = small_model(64);
    Model narrow = small_model(32);
    CHECK_THROWS_AS(restore(narrow.params(), wide.to_checkpoint().tensors), LoadError);
    try {
        restore(narrow.params(), snapshot(wide.params(), [](const std::string& g) { return g == "adapter:emo"; }));
        FAIL("expected a shape error");
    } catch (const LoadError& e) {
        CHECK(std::string(e.what()).find("model expects") != std::string::npos);
    }
    CHECK_THROWS_AS(narrow.import_adapters(wide.to_checkpoint()), LoadError);
}

TEST_CASE("adapter import requires the same encoder", "[checkpoint]") {
    const Model a = small_model(64, 1);
    const Model other_encoder = small_model(64, 2);
    Model target = Model::encoder_from_checkpoint(a.to_checkpoint());
    CHECK(target.adapters().empty());
    CHECK(target.import_adapters(a.to_checkpoint()) == std::vector<std::string>{"emo"});
    CHECK_THROWS_AS(target.import_adapters(a.to_checkpoint()), ConfigError);

    Model fresh = Model::encoder_from_checkpoint(a.to_checkpoint());
    CHECK_THROWS_AS(fresh.import_adapters(other_encoder.to_checkpoint()), LoadError);
}

TEST_CASE("audit hash and f32 rounding", "[checkpoint]") {
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    std::vector<double> v{0.1, 1.0 / 3.0, 1e-40};
    round_to_f32(v);
    CHECK(v[0] == static_cast<double>(0.1f));
    CHECK(v[1] == static_cast<double>(static_cast<float>(1.0 / 3.0)));

    Model m = small_model();
    const auto enc = [](const std::string& g) { return g == "encoder"; };
    const std::string before = sha256_hex(serialize_params(m.params(), enc));
    CHECK(before == sha256_hex(serialize_params(m.params(), enc)));
    Tensor t = m.params().at("encoder.embeddings.norm.beta");
    t.mutable_data()[0] += 1e-12;
    CHECK(sha256_hex(serialize_params(m.params(), enc)) != before);
}
