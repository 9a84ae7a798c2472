// SPDX-License-Identifier: Apache-2.0
//
// Sequential scan selection. Each scan reveals a patch x patch square of a
// hidden image; a label model g maps the accumulated observation to a
// distribution over the label. Candidates are scored with completions I(n)
// of the current observation:
//
//   EIG(c) = H[ mean_n g(.|f_c(I(n))) ] - mean_n H[ g(.|f_c(I(n))) ]
//   EPE(c) = H[ g(.|current) ]          - mean_n H[ g(.|f_c(I(n))) ]
//
// where f_c reveals the previous scans plus c.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aipo/classifier.hpp"
#include "aipo/corruption.hpp"
#include "aipo/evalmetrics.hpp"

namespace aipo::boed {

struct ScanWorld {
  int height = 16;
  int width = 16;
  int patch = 4;
  int grid = 5;         // G x G candidate top-left corners
  int horizon = 5;      // T
  int completions = 10; // N

  void validate() const;
  int cells() const { return grid * grid; }
  /// Candidate corners in row-major order, evenly spaced with patches inside.
  std::vector<ScanCoord> candidates() const;
};

/// Label distribution for an observation.
using LabelModel = std::function<std::vector<double>(const MaskedImage&)>;

LabelModel classifier_model(const Classifier& g);
/// Binary target "label == k": returns (p_k, 1 - p_k).
LabelModel binary_target(LabelModel g, int k);

double entropy(std::span<const double> p);

/// Mixture entropy minus mean entropy. Weights default to uniform.
double eig_from_posteriors(std::span<const std::vector<double>> posteriors,
                           std::span<const double> weights = {});

/// Observation of `image` through `scans` plus `candidate`.
MaskedImage reveal(const ImageGrid& image, std::span<const ScanCoord> scans, ScanCoord candidate, int patch);

double eig_estimate(const LabelModel& g, std::span<const ImageGrid> completions,
                    std::span<const ScanCoord> scans, ScanCoord candidate, int patch,
                    std::span<const double> weights = {});
double epe_estimate(const LabelModel& g, const MaskedImage& current, std::span<const ImageGrid> completions,
                    std::span<const ScanCoord> scans, ScanCoord candidate, int patch);
/// Mixture entropy minus the entropy under completion n (0-based).
double ig_per_sample(const LabelModel& g, std::span<const ImageGrid> completions,
                     std::span<const ScanCoord> scans, ScanCoord candidate, int patch, std::size_t n);

enum class Strategy { eig, epe, random, uncond, nongreedy_uncond };
std::string_view strategy_name(Strategy s);
Strategy parse_strategy(std::string_view s);

struct EigMap {
  int grid = 0;
  std::vector<double> values;     // row-major; 0 where not evaluated
  std::vector<bool> available;    // cells not yet scanned
  int chosen = -1;
};

struct EpisodeState {
  std::vector<ScanCoord> scans;
  std::vector<int> cells;
  std::vector<int> plan;  // committed sequence (nongreedy_uncond)
  std::optional<MaskedImage> observed;
};

/// Shared inputs of the selection rules.
struct Context {
  const ScanWorld* world = nullptr;
  const LabelModel* g = nullptr;
  const Completer* complete = nullptr;      // eig / epe
  std::span<const ImageGrid> pool;          // uncond / nongreedy_uncond
};

struct Choice {
  int cell = -1;
  ScanCoord coord;
  EigMap map;
};

/// Chooses the next scan cell. Previously scanned cells are never chosen;
/// ties go to the lowest row-major index.
Choice select_next(Strategy strategy, const Context& ctx, EpisodeState& state, Rng& rng);

struct StepRecord {
  int step = 0;  // 1-based
  ScanCoord coord;
  int cell = -1;
  double utility = 0.0;  // estimate of the chosen cell (0 for random)
  std::vector<double> posterior;
  double entropy = 0.0;
  EigMap map;
};

struct ScanEpisode {
  Strategy strategy = Strategy::eig;
  int true_label = 0;
  std::vector<double> prior_posterior;  // g with nothing observed
  std::vector<StepRecord> steps;
  Mask mask;
};

ScanEpisode run_episode(Strategy strategy, const Context& ctx, const ImageGrid& image, Rng& rng);

/// Macro one-vs-rest AUROC with midpoint ranks for ties. Classes without
/// positives or negatives are skipped; fewer than two usable classes fail.
double macro_auroc(std::span<const std::vector<double>> posteriors, std::span<const int> labels);
/// Binary AUROC of scores against 0/1 labels.
double binary_auroc(std::span<const double> scores, std::span<const int> positive);

struct SummaryRow {
  std::string strategy;
  int step = 0;
  double auroc = 0.0;
  double accuracy = 0.0;
  double nll = 0.0;
  std::size_t episodes = 0;
};

struct Evaluation {
  std::vector<SummaryRow> rows;               // per strategy and step 0..T, plus "upper_bound"
  std::vector<std::vector<ScanEpisode>> episodes;  // per strategy
};

/// Runs one episode per test image (up to max_episodes) for every strategy
/// and scores the recorded posteriors. The "upper_bound" rows use g on the
/// fully observed image.
/// Episode i uses the stream (seed, "boed.episode", i) for every strategy.
Evaluation evaluate_strategies(const Context& ctx, const Dataset& test,
                               std::span<const Strategy> strategies, int max_episodes,
                               std::uint64_t seed, int threads = 1);

SummaryRow summarize_step(std::string strategy, int step, std::span<const std::vector<double>> posteriors,
                          std::span<const int> labels);

/// Cross-task matrix: rows scan with binary target a, columns score binary
/// target b at step `step`, using the eig strategy.
/// Entries are NaN when class b has no positives or no negatives among the episodes.
std::vector<std::vector<double>> cross_task_matrix(const Context& ctx, const Classifier& g,
                                                   const Dataset& test, int max_episodes, int step,
                                                   std::uint64_t seed, int threads = 1);

void write_episode_csv(const ScanEpisode& e, const std::filesystem::path& path);
void write_summary_csv(std::span<const SummaryRow> rows, const std::filesystem::path& path);
void write_eigmap_csv(const EigMap& m, const std::filesystem::path& path);
/// G x G heatmap scaled so the largest value maps to 255.
void write_eigmap_pgm(const EigMap& m, const std::filesystem::path& path);
void write_matrix_csv(const std::vector<std::vector<double>>& m, const std::filesystem::path& path);

}  // namespace aipo::boed
