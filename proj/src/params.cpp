// SPDX-License-Identifier: Apache-2.0
#include "aipo/params.hpp"

#include <cmath>

namespace aipo {

NumArray init_weight(std::size_t out, std::size_t in, Rng& rng, double gain) {
  std::vector<double> w(out * in);
  const double std = gain / std::sqrt(static_cast<double>(in));
  for (double& v : w) v = std * rng.normal();
  return NumArray::matrix(out, in, std::move(w));
}

bool has_prefix(std::string_view name, std::string_view prefix) {
  return name.substr(0, prefix.size()) == prefix;
}

ParamStore select_prefix(const ParamStore& store, std::string_view prefix) {
  ParamStore out;
  for (const auto& [name, value] : store) {
    if (has_prefix(name, prefix)) out.emplace(name, value);
  }
  return out;
}

double squared_norm(const ParamStore& store) {
  double s = 0.0;
  for (const auto& [name, value] : store) {
    for (double v : value.data()) s += v * v;
  }
  return s;
}

}  // namespace aipo
