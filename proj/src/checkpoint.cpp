// Copyright (c) 2026, The Fuseformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "fuseformer/checkpoint.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

#include "fuseformer/errors.hpp"

namespace fuseformer {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const unsigned char* p) {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

std::uint64_t get_u64(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

struct ManifestEntry {
    std::string name;
    Shape shape;
    std::uint64_t offset = 0;
    std::uint64_t bytes = 0;
};

ManifestEntry parse_entry(const std::string& name, const nlohmann::json& e, const std::string& source) {
    auto fail = [&](const std::string& what) { return LoadError(source + ": entry '" + name + "': " + what); };
    if (!e.is_object()) throw fail("manifest entry is not an object");
    if (!e.contains("dtype") || e["dtype"] != "f32") throw fail("dtype must be \"f32\"");
    if (!e.contains("shape") || !e["shape"].is_array()) throw fail("missing shape");
    if (!e.contains("offset") || !e["offset"].is_number_unsigned()) throw fail("missing or negative offset");
    ManifestEntry m;
    m.name = name;
    for (const auto& d : e["shape"]) {
        if (!d.is_number_unsigned() || d.get<std::uint64_t>() == 0) throw fail("shape extents must be positive integers");
        m.shape.push_back(d.get<std::size_t>());
    }
    m.offset = e["offset"].get<std::uint64_t>();
    if (m.offset % 4 != 0) throw fail("misaligned offset");
    m.bytes = 4 * static_cast<std::uint64_t>(shape_numel(m.shape));
    return m;
}

} // namespace

const StoredTensor* Checkpoint::find(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name) return &t;
    return nullptr;
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
    nlohmann::json manifest = nlohmann::json::object();
    std::uint64_t offset = 0;
    for (const auto& t : ckpt.tensors) {
        if (t.name == kMetaKey) throw ContractError("checkpoint: tensor name collides with the metadata key");
        if (manifest.contains(t.name)) throw ContractError("checkpoint: duplicate tensor " + t.name);
        if (shape_numel(t.shape) != t.values.size())
            throw ContractError("checkpoint: tensor " + t.name + " values do not match its shape");
        manifest[t.name] = {{"shape", t.shape}, {"dtype", "f32"}, {"offset", offset}};
        offset += 4 * t.values.size();
    }
    manifest[std::string(kMetaKey)] = ckpt.meta;
    const std::string text = manifest.dump();

    std::string out(kCheckpointMagic);
    put_u64(out, text.size());
    out += text;
    out.reserve(out.size() + offset);
    for (const auto& t : ckpt.tensors)
        for (float v : t.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
    return out;
}

Checkpoint decode_checkpoint(std::string_view bytes, const std::string& source) {
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    if (bytes.size() < kCheckpointMagic.size() + 8 || bytes.substr(0, kCheckpointMagic.size()) != kCheckpointMagic)
        throw LoadError(source + ": not a checkpoint (bad magic)");
    const std::uint64_t len = get_u64(p + kCheckpointMagic.size());
    const std::size_t header = kCheckpointMagic.size() + 8;
    if (len > bytes.size() - header) throw LoadError(source + ": truncated manifest");

    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(bytes.substr(header, len));
    } catch (const nlohmann::json::exception& e) {
        throw LoadError(source + ": corrupt manifest: " + e.what());
    }
    if (!manifest.is_object()) throw LoadError(source + ": corrupt manifest: not an object");

    Checkpoint ckpt;
    std::vector<ManifestEntry> entries;
    for (const auto& [name, e] : manifest.items()) {
        if (name == kMetaKey) {
            ckpt.meta = e;
            continue;
        }
        entries.push_back(parse_entry(name, e, source));
    }
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.offset < b.offset; });

    const std::uint64_t payload = bytes.size() - header - len;
    std::uint64_t expected = 0;
    for (const auto& m : entries) {
        if (m.offset != expected)
            throw LoadError(source + ": entry '" + m.name + "': offset " + std::to_string(m.offset) +
                            " overlaps or leaves a gap (expected " + std::to_string(expected) + ")");
        if (m.offset + m.bytes > payload)
            throw LoadError(source + ": entry '" + m.name + "': truncated payload (needs " +
                            std::to_string(m.offset + m.bytes) + " bytes, have " + std::to_string(payload) + ")");
        expected += m.bytes;
    }
    if (expected != payload)
        throw LoadError(source + ": " + std::to_string(payload - expected) + " trailing payload bytes");

    const unsigned char* data = p + header + len;
    for (const auto& m : entries) {
        StoredTensor t{m.name, m.shape, std::vector<float>(m.bytes / 4)};
        for (std::size_t i = 0; i < t.values.size(); ++i)
            t.values[i] = std::bit_cast<float>(get_u32(data + m.offset + 4 * i));
        ckpt.tensors.push_back(std::move(t));
    }
    return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    const std::string bytes = encode_checkpoint(ckpt);
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw LoadError("cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw LoadError("short write to " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw LoadError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open checkpoint " + path.string());
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes, path.string());
}

std::vector<StoredTensor> snapshot(const ParamStore& store, const std::function<bool(const std::string&)>& keep) {
    std::vector<StoredTensor> out;
    for (const auto& e : store.entries()) {
        if (keep && !keep(e.spec.group)) continue;
        const auto d = e.tensor.data();
        out.push_back({e.spec.name, e.tensor.shape(), std::vector<float>(d.begin(), d.end())});
    }
    return out;
}

void restore(ParamStore& store, const std::vector<StoredTensor>& tensors) {
    // Validate everything first so a failure leaves the store untouched.
    for (const auto& t : tensors) {
        if (!store.contains(t.name)) throw LoadError("checkpoint entry '" + t.name + "' has no matching parameter");
        const auto& want = store.at(t.name).shape();
        if (want != t.shape)
            throw LoadError("checkpoint entry '" + t.name + "': shape " + shape_str(t.shape) + " but model expects " +
                            shape_str(want));
    }
    for (const auto& t : tensors) {
        Tensor dst = store.at(t.name);
        auto d = dst.mutable_data();
        std::copy(t.values.begin(), t.values.end(), d.begin());
    }
}

std::string serialize_params(const ParamStore& store, const std::function<bool(const std::string&)>& keep) {
    std::string out;
    for (const auto& e : store.entries()) {
        if (!keep(e.spec.group)) continue;
        out += e.spec.name;
        out.push_back('\0');
        out += shape_str(e.tensor.shape());
        out.push_back('\0');
        for (double v : e.tensor.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
    return out;
}

std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw ContractError("sha256: digest failed");
    std::string hex;
    char buf[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(buf, sizeof buf, "%02x", digest[i]);
        hex += buf;
    }
    return hex;
}

void round_to_f32(std::span<double> values) {
    for (auto& v : values) v = static_cast<double>(static_cast<float>(v));
}

} // namespace fuseformer
