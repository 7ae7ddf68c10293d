// Copyright (c) 2026, The Fuseformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "fuseformer/params.hpp"

#include <random>

#include "fuseformer/errors.hpp"

namespace fuseformer {

namespace {

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

} // namespace

std::size_t layout_numel(const Layout& layout) {
    std::size_t n = 0;
    for (const auto& p : layout) n += shape_numel(p.shape);
    return n;
}

void ParamStore::allocate(const Layout& layout, std::uint64_t seed) {
    for (const auto& spec : layout) {
        const std::size_t n = shape_numel(spec.shape);
        std::vector<double> values(n, 0.0);
        const std::uint64_t h = fnv1a(spec.name);
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
        std::mt19937_64 rng(seq);
        switch (spec.init) {
        case InitKind::normal:
        case InitKind::small_normal: {
            std::normal_distribution<double> dist(0.0, spec.init == InitKind::normal ? 0.02 : 1e-4);
            for (auto& v : values) v = static_cast<double>(static_cast<float>(dist(rng)));
            break;
        }
        case InitKind::zeros: break;
        case InitKind::ones: std::fill(values.begin(), values.end(), 1.0); break;
        }
        insert(spec, Tensor(spec.shape, std::move(values), false));
    }
}

void ParamStore::insert(ParamSpec spec, Tensor tensor) {
    if (tensor.shape() != spec.shape)
        throw DimensionError("parameter " + spec.name + ": tensor shape " + shape_str(tensor.shape()) +
                             " does not match " + shape_str(spec.shape));
    if (!index_.emplace(spec.name, entries_.size()).second)
        throw ConfigError("duplicate parameter name " + spec.name);
    entries_.push_back({std::move(spec), std::move(tensor)});
}

const Tensor& ParamStore::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter " + name);
    return entries_[it->second].tensor;
}

const ParamSpec& ParamStore::spec(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter " + name);
    return entries_[it->second].spec;
}

std::vector<ParamStore::Entry> ParamStore::group(const std::string& group) const {
    std::vector<Entry> out;
    for (const auto& e : entries_)
        if (e.spec.group == group) out.push_back(e);
    return out;
}

std::vector<ParamStore::Entry> ParamStore::groups_with_prefix(const std::string& prefix) const {
    std::vector<Entry> out;
    for (const auto& e : entries_)
        if (e.spec.group.rfind(prefix, 0) == 0) out.push_back(e);
    return out;
}

std::size_t ParamStore::total_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.tensor.numel();
    return n;
}

std::size_t ParamStore::trainable_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_)
        if (e.tensor.requires_grad()) n += e.tensor.numel();
    return n;
}

void ParamStore::set_trainable(const std::function<bool(const std::string&)>& trainable) {
    for (auto& e : entries_) {
        e.tensor.set_requires_grad(trainable(e.spec.group));
        e.tensor.zero_grad();
    }
}

std::vector<ParamStore::Entry> ParamStore::trainable() const {
    std::vector<Entry> out;
    for (const auto& e : entries_)
        if (e.tensor.requires_grad()) out.push_back(e);
    return out;
}

void ParamStore::zero_grad() {
    for (auto& e : entries_) e.tensor.zero_grad();
}

} // namespace fuseformer
