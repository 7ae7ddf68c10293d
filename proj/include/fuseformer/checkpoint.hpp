// Copyright (c) 2026, The Fuseformer Authors
// SPDX-License-Identifier: Apache-2.0
//
// Binary checkpoint: "AFCKPT01", u64 LE manifest length, JSON manifest
// {name -> {shape, dtype: "f32", offset}}, then the f32 LE payload. The
// manifest key "__meta__" carries the model/config snapshot.

#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "fuseformer/params.hpp"

namespace fuseformer {

inline constexpr std::string_view kCheckpointMagic = "AFCKPT01";
inline constexpr std::string_view kMetaKey = "__meta__";

struct StoredTensor {
    std::string name;
    Shape shape;
    std::vector<float> values;
};

struct Checkpoint {
    nlohmann::json meta = nlohmann::json::object();
    std::vector<StoredTensor> tensors;

    const StoredTensor* find(const std::string& name) const;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
/// Validates the whole manifest before touching the payload. Throws LoadError
/// naming the offending entry.
Checkpoint decode_checkpoint(std::string_view bytes, const std::string& source = "<memory>");

/// Writes to a sibling temp file, then renames over `path`.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Snapshot of the parameters whose group passes `keep` (all when empty).
std::vector<StoredTensor> snapshot(const ParamStore& store,
                                   const std::function<bool(const std::string& group)>& keep = {});

/// Copies stored values into existing store tensors; shapes must match.
void restore(ParamStore& store, const std::vector<StoredTensor>& tensors);

/// Full-precision (f64 LE) bytes of the selected parameters in store order,
/// prefixed by names and shapes; the input to the frozen-parameter audit hash.
std::string serialize_params(const ParamStore& store, const std::function<bool(const std::string& group)>& keep);
std::string sha256_hex(std::string_view bytes);

/// Rounds every value to the nearest f32, matching what a checkpoint stores.
void round_to_f32(std::span<double> values);

} // namespace fuseformer
