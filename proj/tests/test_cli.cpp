// Copyright (c) 2026, The Fuseformer Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fuseformer/checkpoint.hpp"
#include "fuseformer/commands.hpp"

using namespace fuseformer;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code;
    std::string out, err;
};

Outcome cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream s;
    s << f.rdbuf();
    return s.str();
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("fuseformer_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

/// A small model and short schedule so that each training command finishes in
/// about a second.
fs::path tiny_config(const fs::path& dir) {
    const nlohmann::json j = {
        {"model",
         {{"num_layers", 1}, {"hidden_size", 16}, {"num_heads", 2}, {"ff_size", 32}, {"vocab_size", 96},
          {"max_positions", 16}, {"reduction_factor", 4}}},
        {"lr", 5e-3},
        {"epochs", 2},
        {"patience", 1},
        {"batch_size", 16},
        {"max_len", 12},
        {"runs", 1},
        {"pretrain_epochs", 1}};
    const fs::path p = dir / "config.json";
    std::ofstream(p) << j.dump(2);
    return p;
}

fs::path corpus(const fs::path& dir) {
    REQUIRE(cli({"synth", "--out", (dir / "data").string(), "--n-train", "160", "--n-valid", "40", "--n-test", "40",
                 "--seed", "3"})
                .code == 0);
    return dir / "data";
}

} // namespace

TEST_CASE("stats with proportions reproduces the positive weights", "[cli]") {
    const auto dir = scratch("stats");
    const auto r = cli({"stats", "--priors", "0.52,0.25,0.21,0.10,0.17,0.08", "--out", (dir / "s.json").string()});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("0.923") != std::string::npos);
    CHECK(r.out.find("11.500") != std::string::npos);
    const auto j = nlohmann::json::parse(slurp(dir / "s.json"));
    CHECK(j["classes"][0]["name"] == "Joy");
    CHECK(j["classes"][5]["w"] == 11.5);
}

TEST_CASE("empty and malformed inputs exit with code 2", "[cli]") {
    const auto dir = scratch("errors");
    std::ofstream(dir / "empty.jsonl").close();
    const auto r = cli({"stats", "--corpus", (dir / "empty.jsonl").string(), "--out", (dir / "s.json").string()});
    CHECK(r.code == kExitInput);
    CHECK(r.err.find("empty") != std::string::npos);
    CHECK_FALSE(fs::exists(dir / "s.json"));

    CHECK(cli({"stats", "--priors", "0.5,0.5"}).code == kExitInput);
    CHECK(cli({"stats", "--no-such-flag"}).code == kExitInput);
    CHECK(cli({}).code == kExitInput);
    CHECK(cli({"--help"}).code == kExitOk);
    CHECK(cli({"evaluate", "--checkpoint", (dir / "missing.ckpt").string(), "--corpus",
               (dir / "empty.jsonl").string()})
              .code == kExitInput);
    std::ofstream(dir / "bad.jsonl") << "{\"text\": \"a\"}\n";
    CHECK(cli({"stats", "--corpus", (dir / "bad.jsonl").string()}).code == kExitInput);
}

TEST_CASE("grad-check passes and catches a corrupted block", "[cli]") {
    const auto dir = scratch("grad");
    const auto ok = cli({"grad-check", "--coords", "3", "--out", (dir / "g.json").string()});
    CHECK(ok.code == kExitOk);
    const auto j = nlohmann::json::parse(slurp(dir / "g.json"));
    CHECK(j["blocks"].size() == 6);
    CHECK(j["pass"] == true);

    const auto bad = cli({"grad-check", "--coords", "3", "--corrupt-block", "fusion"});
    CHECK(bad.code == kExitVerification);
    CHECK(bad.out.find("FAIL") != std::string::npos);
}

TEST_CASE("count-params reports the reference sizes", "[cli]") {
    const auto dir = scratch("count");
    const auto r = cli({"count-params", "--full-scale", "--out", (dir / "c.json").string()});
    REQUIRE(r.code == 0);
    const auto j = nlohmann::json::parse(slurp(dir / "c.json"));
    CHECK(j["settings"]["adapter"]["trainable"] == 1489734);
    CHECK(j["settings"]["fusion3"]["trainable"] == 21828870);
    CHECK(j["fusion5_minus_fusion3"] == 2 * j["per_task_adapter"].get<std::size_t>());
    CHECK(r.out.find("= 2 x adapter") != std::string::npos);
    CHECK(cli({"count-params", "--full-scale", "--config", "x.json"}).code == kExitInput);
}

TEST_CASE("two-stage pipeline, evaluation and byte-identical reruns", "[cli][slow]") {
    const auto dir = scratch("pipeline");
    const auto cfg = tiny_config(dir).string();
    const auto data = corpus(dir);
    const auto train = (data / "train.jsonl").string(), valid = (data / "valid.jsonl").string(),
               test = (data / "test.jsonl").string();

    REQUIRE(cli({"pretrain", "--config", cfg, "--corpus", train, "--out", (dir / "enc").string()}).code == 0);
    const auto encoder = (dir / "enc" / "encoder.ckpt").string();

    auto adapter = [&](const std::string& task, const std::string& out, const std::string& runs = "1") {
        return cli({"train-adapter", "--config", cfg, "--corpus", train, "--valid", valid, "--test", test, "--task",
                    task, "--encoder", encoder, "--runs", runs, "--out", (dir / out).string()});
    };
    REQUIRE(adapter("emotion", "emo", "2").code == 0);
    REQUIRE(adapter("sent2", "s2").code == 0);
    REQUIRE(fs::exists(dir / "emo" / "run1" / "report.json"));
    const auto agg = nlohmann::json::parse(slurp(dir / "emo" / "aggregate.json"));
    CHECK(agg["runs"].size() == 2);
    CHECK(agg["seeds"] == nlohmann::json::array({42, 43}));

    // Stage 1 stores the encoder bit-for-bit.
    const Checkpoint enc = load_checkpoint(encoder), emo = load_checkpoint(dir / "emo" / "model.ckpt");
    for (const auto& t : enc.tensors) REQUIRE(emo.find(t.name)->values == t.values);

    SECTION("evaluate reproduces the training test report") {
        const auto r = cli({"evaluate", "--checkpoint", (dir / "emo" / "run0" / "model.ckpt").string(), "--corpus",
                            test, "--out", (dir / "eval").string()});
        REQUIRE(r.code == 0);
        const auto report = nlohmann::json::parse(slurp(dir / "eval" / "report.json"))["report"];
        CHECK(report == agg["runs"][0]);
    }

    SECTION("fusion keeps encoder and adapters frozen") {
        const auto r = cli({"train-fusion", "--config", cfg, "--corpus", train, "--valid", valid, "--test", test,
                            "--task", "emotion", "--name", "emo_fused", "--adapters",
                            (dir / "emo" / "model.ckpt").string(), (dir / "s2" / "model.ckpt").string(), "--out",
                            (dir / "fusion").string()});
        CHECK(r.code == 0);
        CHECK(r.out.find("FROZEN OK") != std::string::npos);
        const Checkpoint fused = load_checkpoint(dir / "fusion" / "model.ckpt");
        for (const auto& src : {emo, load_checkpoint(dir / "s2" / "model.ckpt")})
            for (const auto& t : src.tensors)
                if (t.name.rfind("encoder.", 0) == 0 || t.name.rfind("adapter.", 0) == 0)
                    REQUIRE(fused.find(t.name)->values == t.values);
    }

    SECTION("fusion refuses adapters trained on different encoders") {
        REQUIRE(cli({"pretrain", "--config", cfg, "--corpus", train, "--seed", "9", "--out", (dir / "enc9").string()})
                    .code == 0);
        REQUIRE(cli({"train-adapter", "--config", cfg, "--corpus", train, "--valid", valid, "--test", test, "--task",
                     "sent2", "--encoder", (dir / "enc9" / "encoder.ckpt").string(), "--out", (dir / "other").string()})
                    .code == 0);
        const auto r = cli({"train-fusion", "--config", cfg, "--corpus", train, "--valid", valid, "--test", test,
                            "--adapters", (dir / "emo" / "model.ckpt").string(),
                            (dir / "other" / "model.ckpt").string(), "--out", (dir / "bad").string()});
        CHECK(r.code == kExitInput);
    }

    SECTION("reruns are byte-identical") {
        REQUIRE(adapter("emotion", "emo_again", "2").code == 0);
        for (const char* f : {"aggregate.json", "aggregate.txt", "model.ckpt", "run0/report.json", "run1/model.ckpt"})
            CHECK(slurp(dir / "emo" / f) == slurp(dir / "emo_again" / f));
    }

    SECTION("divergence exits with code 3") {
        const auto r = cli({"train-adapter", "--config", cfg, "--corpus", train, "--valid", valid, "--test", test,
                            "--encoder", encoder, "--lr", "1e300", "--loss-reduction", "sum", "--out",
                            (dir / "diverged").string()});
        CHECK(r.code == kExitDivergence);
    }

    SECTION("evaluation on an empty split exits with code 2") {
        std::ofstream(dir / "empty.jsonl").close();
        CHECK(cli({"evaluate", "--checkpoint", (dir / "emo" / "model.ckpt").string(), "--corpus",
                   (dir / "empty.jsonl").string()})
                  .code == kExitInput);
    }
}
