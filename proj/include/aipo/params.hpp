// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <string_view>

#include "aipo/ndarray.hpp"
#include "aipo/rng.hpp"

namespace aipo {

/// Named parameter collection. Ordered by name so iteration (and therefore
/// serialization and gradient reduction) is deterministic.
using ParamStore = std::map<std::string, NumArray, std::less<>>;

/// Weight matrix [out, in] with entries N(0, 1/in) times gain.
NumArray init_weight(std::size_t out, std::size_t in, Rng& rng, double gain = 1.0);

bool has_prefix(std::string_view name, std::string_view prefix);

/// Entries of store whose names start with prefix.
ParamStore select_prefix(const ParamStore& store, std::string_view prefix);

/// Sum of squares over all entries.
double squared_norm(const ParamStore& store);

}  // namespace aipo
