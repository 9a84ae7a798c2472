// SPDX-License-Identifier: Apache-2.0
#include "aipo/train.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <thread>

#include "aipo/error.hpp"
#include "aipo/kernels.hpp"
#include "aipo/objectives.hpp"

namespace aipo {

std::string_view objective_name(Objective o) {
  switch (o) {
    case Objective::uncond: return "uncond";
    case Objective::forward: return "forward";
    case Objective::reverse: return "reverse";
  }
  return "?";
}

Objective parse_objective(std::string_view name) {
  if (name == "uncond") return Objective::uncond;
  if (name == "forward") return Objective::forward;
  if (name == "reverse") return Objective::reverse;
  throw config_error("bad_objective", "unknown objective '" + std::string(name) + "'");
}

bool adam_step(ParamStore& params, const GradMap& grads, AdamState& state, const AdamConfig& config,
               const std::function<bool(const std::string&)>& frozen) {
  for (const auto& [name, g] : grads) {
    if (frozen && frozen(name)) continue;
    if (!g.all_finite()) return false;
  }
  for (const auto& [name, g] : grads) {
    if (frozen && frozen(name)) continue;
    auto it = params.find(name);
    if (it == params.end()) throw numeric_error("unknown_param", "gradient for unknown parameter " + name);
    if (it->second.shape() != g.shape()) {
      throw numeric_error("shape_mismatch", "gradient shape differs for " + name);
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const kernels::AdamCoefficients c{config.lr, config.beta1, config.beta2, config.eps,
                                    1.0 - std::pow(config.beta1, t), 1.0 - std::pow(config.beta2, t)};
  for (const auto& [name, g] : grads) {
    if (frozen && frozen(name)) continue;
    NumArray& p = params.find(name)->second;
    auto m = state.m.try_emplace(name, NumArray::zeros(p.shape())).first;
    auto v = state.v.try_emplace(name, NumArray::zeros(p.shape())).first;
    kernels::adam_update(p.mutable_data(), g.data(), m->second.mutable_data(), v->second.mutable_data(), c);
  }
  return true;
}

double global_grad_norm(const GradMap& grads, const std::function<bool(const std::string&)>& frozen) {
  double ss = 0.0;
  for (const auto& [name, g] : grads) {
    if (frozen && frozen(name)) continue;
    for (double x : g.values()) ss += x * x;
  }
  return std::sqrt(ss);
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw config_error("bad_lr", "learning rate must be positive");
  if (!(skip_threshold > 0.0)) throw config_error("bad_skip_threshold", "skip threshold must be positive");
  if (batch < 1) throw config_error("bad_batch", "batch size must be >= 1");
  if (iterations < 0) throw config_error("bad_iterations", "iterations must be >= 0");
  if (threads < 1) throw config_error("bad_threads", "threads must be >= 1");
  if (val_every < 0) throw config_error("bad_val_every", "val_every must be >= 0");
  if (kl_warmup < 0) throw config_error("bad_kl_warmup", "kl_warmup must be >= 0");
}

bool TrainConfig::is_frozen(const std::string& name) const {
  if (freeze_vae && (hvae::is_model_param(name) || hvae::is_encoder_param(name))) return true;
  for (const auto& f : freeze) {
    if (f == name) return true;
    if (!f.empty() && f.back() == '.' && has_prefix(name, f)) return true;
  }
  return false;
}

int TrainLog::skipped_count() const {
  int n = 0;
  for (const auto& r : rows) n += r.skipped ? 1 : 0;
  return n;
}

ExampleSource dataset_source(const Dataset& data, Objective objective, double side_frac, int n_max,
                             bool holes) {
  if (data.images.empty()) throw config_error("empty_dataset", "training set is empty");
  return [&data, objective, side_frac, n_max, holes](int, int, Rng& rng) {
    Example ex{data.images[rng.below(data.images.size())], std::nullopt};
    if (objective != Objective::uncond) {
      const Mask m = holes ? sample_holes_mask(data.height, data.width, side_frac, n_max, rng)
                           : sample_patch_mask(data.height, data.width, side_frac, n_max, rng);
      ex.observed = apply_mask(ex.image, m);
    }
    return ex;
  };
}

namespace {

struct SampleResult {
  GradMap grads;
  double value = 0.0;
  bool failed = false;
};

SampleResult sample_gradient(const hvae::Model& model, const TrainConfig& config,
                             const ExampleSource& source, int iteration, int index) {
  Rng rng = Rng::stream(derive_seed(config.seed, "train.iteration", static_cast<std::uint64_t>(iteration)),
                        "example", static_cast<std::uint64_t>(index));
  SampleResult r;
  try {
    const Example ex = source(iteration, index, rng);
    const hvae::GroupNoise eps = hvae::draw_noise(model.config, rng);
    Tape tape(true);
    tape.set_frozen([&config](const std::string& n) { return config.is_frozen(n); });
    TracedObjective obj;
    if (config.objective == Objective::uncond) {
      const double w = config.kl_warmup > 0 ? std::min(1.0, (iteration + 1.0) / config.kl_warmup) : 1.0;
      obj = trace_elbo_uncond(model, tape, ex.image, eps, config.analytic_kl, w);
    } else {
      if (!ex.observed) throw config_error("missing_observation", "partial objectives need observations");
      obj = config.objective == Objective::forward
                ? trace_o_forward(model, tape, ex.image, *ex.observed, eps)
                : trace_o_reverse(model, tape, *ex.observed, eps, config.analytic_kl);
    }
    r.value = obj.estimate.value;
    r.grads = tape.backward(obj.value);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::numeric) throw;
    r.failed = true;
  }
  return r;
}

}  // namespace

BatchGradient batch_gradient(const hvae::Model& model, const TrainConfig& config,
                             const ExampleSource& source, int iteration) {
  const int B = config.batch;
  std::vector<SampleResult> results(static_cast<std::size_t>(B));
  const int lanes = std::min(config.threads, B);
  if (lanes <= 1) {
    for (int i = 0; i < B; ++i) results[static_cast<std::size_t>(i)] = sample_gradient(model, config, source, iteration, i);
  } else {
    std::vector<std::thread> workers;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(lanes));
    for (int lane = 0; lane < lanes; ++lane) {
      workers.emplace_back([&, lane] {
        try {
          for (int i = lane; i < B; i += lanes) {
            results[static_cast<std::size_t>(i)] = sample_gradient(model, config, source, iteration, i);
          }
        } catch (...) {
          errors[static_cast<std::size_t>(lane)] = std::current_exception();
        }
      });
    }
    for (auto& w : workers) w.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  // Fixed-order reduction into the loss gradient -mean(objective).
  BatchGradient out;
  const double scale = -1.0 / static_cast<double>(B);
  for (const SampleResult& r : results) {
    if (r.failed) {
      out.failed = true;
      continue;
    }
    out.objective += r.value;
    for (const auto& [name, g] : r.grads) {
      auto it = out.grads.try_emplace(name, NumArray::zeros(g.shape())).first;
      kernels::axpy(scale, g.data(), it->second.mutable_data());
    }
  }
  out.objective /= static_cast<double>(B);
  if (out.failed) out.objective = std::nan("");
  return out;
}

TrainResult train(const TrainConfig& config, const ExampleSource& source, hvae::Model initial,
                  const Validator& validator) {
  config.validate();
  TrainResult res{std::move(initial), {}};
  if (config.init_partial_from_encoder) hvae::init_partial_from_encoder(res.model);
  const auto frozen = [&config](const std::string& n) { return config.is_frozen(n); };
  AdamState state;
  const AdamConfig adam{config.lr, 0.9, 0.999, 1e-8};
  for (int it = 0; it < config.iterations; ++it) {
    BatchGradient bg = batch_gradient(res.model, config, source, it);
    TrainRow row;
    row.iteration = it;
    row.objective = bg.objective;
    row.grad_norm = bg.failed ? std::nan("") : global_grad_norm(bg.grads, frozen);
    row.skipped = bg.failed || !std::isfinite(row.grad_norm) || row.grad_norm > config.skip_threshold;
    if (!row.skipped) row.skipped = !adam_step(res.model.params, bg.grads, state, adam, frozen);
    if (validator && config.val_every > 0 && ((it + 1) % config.val_every == 0)) {
      row.val_estimate = validator(res.model);
    }
    res.log.rows.push_back(row);
  }
  return res;
}

void write_train_csv(const TrainLog& log, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("open_failed", "cannot write " + path.string());
  out << "iteration,objective,grad_norm,skipped,val_estimate\n";
  out << std::setprecision(17);
  for (const auto& r : log.rows) {
    out << r.iteration << ',' << r.objective << ',' << r.grad_norm << ',' << (r.skipped ? 1 : 0) << ',';
    if (r.val_estimate) out << *r.val_estimate;
    out << '\n';
  }
  if (!out) throw io_error("write_failed", "cannot write " + path.string());
}

}  // namespace aipo
