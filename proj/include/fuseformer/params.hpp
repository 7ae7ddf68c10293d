// Copyright (c) 2026, The Fuseformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "fuseformer/tensor.hpp"

namespace fuseformer {

enum class InitKind {
    normal,       // N(0, 0.02)
    small_normal, // N(0, 1e-4), near-identity adapter up-projections
    zeros,
    ones,
};

/// Shape-level description of one named parameter; enough to count or
/// allocate it.
struct ParamSpec {
    std::string name;
    Shape shape;
    std::string group; // encoder | adapter:<task> | fusion | head:<task>
    bool decay = true; // false for biases and layer-norm parameters
    InitKind init = InitKind::normal;
};

using Layout = std::vector<ParamSpec>;

std::size_t layout_numel(const Layout& layout);

/// Named parameter tensors in insertion order.
class ParamStore {
  public:
    struct Entry {
        ParamSpec spec;
        Tensor tensor;
    };

    /// Allocates and initializes every parameter of `layout`. Each tensor
    /// draws from its own generator seeded by (seed, name), so values do not
    /// depend on allocation order. Values are representable in 32 bits.
    void allocate(const Layout& layout, std::uint64_t seed);
    void insert(ParamSpec spec, Tensor tensor);

    bool contains(const std::string& name) const { return index_.count(name) != 0; }
    const Tensor& at(const std::string& name) const;
    const ParamSpec& spec(const std::string& name) const;

    const std::vector<Entry>& entries() const { return entries_; }
    std::vector<Entry> group(const std::string& group) const;
    std::vector<Entry> groups_with_prefix(const std::string& prefix) const;

    std::size_t total_count() const;
    std::size_t trainable_count() const;

    void set_trainable(const std::function<bool(const std::string& group)>& trainable);
    std::vector<Entry> trainable() const;
    void zero_grad();

  private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

} // namespace fuseformer
