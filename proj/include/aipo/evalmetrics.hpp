// SPDX-License-Identifier: Apache-2.0
//
// Sample-quality metrics computed in the feature space of the masked-image
// classifier: inception score (mutual-information form), Frechet distance
// between Gaussian feature summaries, and pairwise feature diversity.
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "aipo/classifier.hpp"
#include "aipo/hvae.hpp"

namespace aipo {

/// exp of mean_i KL(p(y|x_i) || mean_j p(y|x_j)).
double is_mutual_information(std::span<const std::vector<double>> posteriors);

struct GaussianSummary {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;  // unbiased (n - 1) estimate
  std::size_t count = 0;

  int dim() const { return static_cast<int>(mean.size()); }
  /// False when count < dim + 1, i.e. the covariance cannot be full rank.
  bool full_rank() const { return count >= static_cast<std::size_t>(dim()) + 1; }

  static GaussianSummary fit(std::span<const std::vector<double>> features);
};

double frechet_distance(const GaussianSummary& a, const GaussianSummary& b);

/// Draws one completion of an observation.
using Completer = std::function<ImageGrid(const MaskedImage&, Rng&)>;
Completer model_completer(const hvae::Model& model, bool paste = true);

enum class MaskMode { patches, holes };
std::string_view mask_mode_name(MaskMode m);
MaskMode parse_mask_mode(std::string_view s);

struct FidResult {
  double value = 0.0;
  std::size_t samples = 0;
  bool flagged = false;  // too few samples for a full-rank covariance
};

/// Features of a fully observed image.
std::vector<double> image_features(const Classifier& g, const ImageGrid& image);

/// Mask with exactly n patches, or its complement in holes mode.
Mask sample_eval_mask(int height, int width, double side_frac, int n, MaskMode mode, Rng& rng);

/// Frechet distance between the test set and one completion per test image,
/// each from a mask with exactly n patches (or its holes complement).
FidResult fid_n_pipeline(const Classifier& g, const Dataset& test, const Completer& complete, int n,
                         MaskMode mode, double side_frac, std::uint64_t seed);
/// Same, with completions pooled over n = 0..n_max.
FidResult fid_agg(const Classifier& g, const Dataset& test, const Completer& complete, int n_max,
                  MaskMode mode, double side_frac, std::uint64_t seed);

/// Inception score of one completion per test image at n patches.
double inception_score_n(const Classifier& g, const Dataset& test, const Completer& complete, int n,
                         MaskMode mode, double side_frac, std::uint64_t seed);

struct DiversityEstimate {
  double mean = 0.0;
  double se = 0.0;
  std::size_t pairs = 0;
};

/// Mean feature distance between two independent completions, over P pairs.
DiversityEstimate pairwise_diversity(const Classifier& g, const Completer& complete,
                                     const MaskedImage& observed, int pairs, Rng& rng);

struct ReconRow {
  std::string probe;
  bool in_distribution = true;
  double mean_error = 0.0;
};
std::vector<ReconRow> reconstruction_error_report(const hvae::Model& model,
                                                  std::span<const ImageGrid> in_distribution,
                                                  std::span<const ImageGrid> out_of_distribution);
/// Out-of-distribution probes: checkerboard, all-zeros, all-ones.
std::vector<ImageGrid> ood_probes(int height, int width);

struct MetricRow {
  std::string metric;
  int n_patches = 0;
  std::string mode;
  double value = 0.0;
  std::uint64_t seed = 0;
};
void write_metric_csv(std::span<const MetricRow> rows, const std::filesystem::path& path);

}  // namespace aipo
