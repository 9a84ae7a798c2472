// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "aipo/corruption.hpp"
#include "aipo/hvae.hpp"
#include "aipo/params.hpp"
#include "aipo/tape.hpp"

namespace aipo {

enum class Objective { uncond, forward, reverse };

std::string_view objective_name(Objective o);
Objective parse_objective(std::string_view name);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  ParamStore m;
  ParamStore v;
  std::uint64_t step = 0;
};

/// One Adam update of every parameter that has a gradient and is not
/// frozen. Returns false, leaving params and state untouched, when any
/// gradient entry is not finite.
bool adam_step(ParamStore& params, const GradMap& grads, AdamState& state, const AdamConfig& config,
               const std::function<bool(const std::string&)>& frozen = {});

/// Global L2 norm over the gradients that would be applied.
double global_grad_norm(const GradMap& grads, const std::function<bool(const std::string&)>& frozen = {});

struct TrainConfig {
  Objective objective = Objective::uncond;
  double lr = 1e-3;
  int batch = 32;
  int iterations = 1000;
  double skip_threshold = 100.0;
  std::vector<std::string> freeze;  // exact names, or prefixes ending in '.'
  bool freeze_vae = false;          // freeze every model and encoder parameter
  bool init_partial_from_encoder = false;
  bool analytic_kl = false;
  int kl_warmup = 0;  // uncond only: latent terms weighted min(1, (it + 1) / kl_warmup)
  std::uint64_t seed = 0;
  int threads = 1;
  int val_every = 0;  // 0 disables validation

  void validate() const;
  bool is_frozen(const std::string& name) const;
};

struct TrainRow {
  int iteration = 0;
  double objective = 0.0;  // batch mean
  double grad_norm = 0.0;
  bool skipped = false;
  std::optional<double> val_estimate;
};

struct TrainLog {
  std::vector<TrainRow> rows;
  int skipped_count() const;
};

/// One training example: a full image and, for the partial objectives, its
/// observation.
struct Example {
  ImageGrid image;
  std::optional<MaskedImage> observed;
};

/// Produces example `index` of iteration `iteration` from the given stream.
using ExampleSource = std::function<Example(int iteration, int index, Rng& rng)>;
using Validator = std::function<double(const hvae::Model&)>;

/// Examples drawn uniformly from a dataset; masks from the patch sampler
/// (or its hole complement) for the partial objectives.
ExampleSource dataset_source(const Dataset& data, Objective objective, double side_frac, int n_max,
                             bool holes);

/// Gradient of the batch-mean objective (to be maximized) and the mean
/// value. Per-example RNG streams depend only on (seed, iteration, index),
/// and gradients are summed in index order, so the result does not depend
/// on the thread count.
struct BatchGradient {
  GradMap grads;
  double objective = 0.0;
  bool failed = false;  // a non-finite value was produced
};
BatchGradient batch_gradient(const hvae::Model& model, const TrainConfig& config,
                             const ExampleSource& source, int iteration);

struct TrainResult {
  hvae::Model model;
  TrainLog log;
};

TrainResult train(const TrainConfig& config, const ExampleSource& source, hvae::Model initial,
                  const Validator& validator = {});

void write_train_csv(const TrainLog& log, const std::filesystem::path& path);

}  // namespace aipo
