// Copyright (c) 2026, The Fuseformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace fuseformer {

/// Shape disagreement between operands.
class DimensionError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// A precondition of an operation was violated by the caller.
class ContractError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of a function (e.g. log of 0).
class DomainError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input file (corpus, checkpoint, vocabulary).
class LoadError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration: unknown task, empty split, inconsistent settings.
class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

} // namespace fuseformer
