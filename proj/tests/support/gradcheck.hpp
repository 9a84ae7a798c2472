// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference checks of reverse-mode gradients.
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "aipo/hvae.hpp"
#include "aipo/tape.hpp"

namespace aipo::testing {

/// Relative error between two gradient tensors: |a - n| / max(|a|, |n|) in
/// the L2 norm; 0 when both norms are below `floor`.
double relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric,
                      double floor = 1e-9);

/// L2 resolution of a central difference of f over n entries: 10 sqrt(n)
/// max(|f|, 1) eps / step.
double fd_noise_floor(double f, std::size_t n, double step);

struct GradCheckResult {
  std::string name;
  int instances = 0;
  double max_rel_error = 0.0;
  std::string worst;  // where the maximum occurred
};

/// Every tape op on `instances` random inputs, entries N(0, 1).
std::vector<GradCheckResult> check_ops(int instances, std::uint64_t seed, double step = 1e-5);

/// Tiny random hvae configuration (groups, widths, head and feature kinds,
/// likelihood all drawn from rng).
hvae::HvaeConfig random_toy_config(Rng& rng);

/// elbo_uncond (sampled and analytic KL), o_forward and o_reverse (sampled
/// and analytic KL) on `configs` random configurations, every parameter.
std::vector<GradCheckResult> check_objectives(int configs, std::uint64_t seed, double step = 1e-5);

}  // namespace aipo::testing
