// SPDX-License-Identifier: Apache-2.0
#include "aipo/evalmetrics.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>

#include "aipo/error.hpp"

namespace aipo {
namespace {

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.info() != Eigen::Success) throw numeric_error("eigen_failed", "eigendecomposition failed");
  Eigen::VectorXd ev = es.eigenvalues();
  const double tol = 1e-8 * std::max(1.0, ev.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) < -tol) throw numeric_error("not_psd", "covariance has a negative eigenvalue");
    ev(i) = std::sqrt(std::max(0.0, ev(i)));
  }
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

double trace_sqrt(const Eigen::MatrixXd& m) {
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw numeric_error("eigen_failed", "eigendecomposition failed");
  const Eigen::VectorXd& ev = es.eigenvalues();
  const double tol = 1e-8 * std::max(1.0, ev.cwiseAbs().maxCoeff());
  double t = 0.0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) < -tol) throw numeric_error("not_psd", "product covariance has a negative eigenvalue");
    t += std::sqrt(std::max(0.0, ev(i)));
  }
  return t;
}

FidResult distance_to_test(const Classifier& g, const Dataset& test,
                           const std::vector<std::vector<double>>& completion_features) {
  std::vector<std::vector<double>> ref;
  ref.reserve(test.images.size());
  for (const auto& img : test.images) ref.push_back(image_features(g, img));
  const GaussianSummary a = GaussianSummary::fit(ref);
  const GaussianSummary b = GaussianSummary::fit(completion_features);
  return {frechet_distance(a, b), b.count, !a.full_rank() || !b.full_rank()};
}

void complete_all(const Classifier& g, const Dataset& test, const Completer& complete, int n,
                  MaskMode mode, double side_frac, std::uint64_t seed,
                  std::vector<std::vector<double>>* features, std::vector<std::vector<double>>* posteriors) {
  for (std::size_t i = 0; i < test.images.size(); ++i) {
    Rng rng = Rng::stream(derive_seed(seed, "eval.completion", static_cast<std::uint64_t>(n)), "image", i);
    const ImageGrid& img = test.images[i];
    const Mask m = sample_eval_mask(img.height, img.width, side_frac, n, mode, rng);
    const ImageGrid c = complete(apply_mask(img, m), rng);
    std::vector<double> p, f;
    classify_with_features(g, apply_mask(c, Mask::ones(c.height, c.width)), posteriors ? &p : nullptr,
                           features ? &f : nullptr);
    if (features) features->push_back(std::move(f));
    if (posteriors) posteriors->push_back(std::move(p));
  }
}

}  // namespace

double is_mutual_information(std::span<const std::vector<double>> posteriors) {
  if (posteriors.empty()) throw numeric_error("empty_samples", "inception score of an empty sample set");
  const std::size_t K = posteriors[0].size();
  std::vector<double> marginal(K, 0.0);
  for (const auto& p : posteriors) {
    if (p.size() != K) throw numeric_error("shape_mismatch", "posteriors differ in class count");
    for (std::size_t k = 0; k < K; ++k) marginal[k] += p[k];
  }
  for (double& m : marginal) m /= static_cast<double>(posteriors.size());
  double kl = 0.0;
  for (const auto& p : posteriors) {
    for (std::size_t k = 0; k < K; ++k) {
      if (p[k] > 0.0) kl += p[k] * (std::log(p[k]) - std::log(marginal[k]));
    }
  }
  return std::exp(kl / static_cast<double>(posteriors.size()));
}

GaussianSummary GaussianSummary::fit(std::span<const std::vector<double>> features) {
  if (features.empty()) throw numeric_error("empty_samples", "summary of an empty feature set");
  const auto F = static_cast<Eigen::Index>(features[0].size());
  GaussianSummary s;
  s.count = features.size();
  s.mean = Eigen::VectorXd::Zero(F);
  for (const auto& f : features) {
    if (static_cast<Eigen::Index>(f.size()) != F) throw numeric_error("shape_mismatch", "feature widths differ");
    s.mean += Eigen::Map<const Eigen::VectorXd>(f.data(), F);
  }
  s.mean /= static_cast<double>(s.count);
  s.cov = Eigen::MatrixXd::Zero(F, F);
  for (const auto& f : features) {
    const Eigen::VectorXd r = Eigen::Map<const Eigen::VectorXd>(f.data(), F) - s.mean;
    s.cov.noalias() += r * r.transpose();
  }
  if (s.count > 1) s.cov /= static_cast<double>(s.count - 1);
  return s;
}

double frechet_distance(const GaussianSummary& a, const GaussianSummary& b) {
  if (a.dim() != b.dim()) throw numeric_error("shape_mismatch", "summaries have different widths");
  const Eigen::MatrixXd sa = psd_sqrt(a.cov);
  const double cross = trace_sqrt(sa * b.cov * sa);
  const double d = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * cross;
  return std::max(0.0, d);
}

Completer model_completer(const hvae::Model& model, bool paste) {
  return [&model, paste](const MaskedImage& x, Rng& rng) { return hvae::sample_completion(model, x, rng, paste); };
}

std::string_view mask_mode_name(MaskMode m) { return m == MaskMode::patches ? "patches" : "holes"; }

MaskMode parse_mask_mode(std::string_view s) {
  if (s == "patches") return MaskMode::patches;
  if (s == "holes") return MaskMode::holes;
  throw config_error("bad_mode", "mask mode must be patches or holes, got '" + std::string(s) + "'");
}

std::vector<double> image_features(const Classifier& g, const ImageGrid& image) {
  return classifier_features(g, apply_mask(image, Mask::ones(image.height, image.width)));
}

Mask sample_eval_mask(int height, int width, double side_frac, int n, MaskMode mode, Rng& rng) {
  const Mask m = sample_patch_mask_exact(height, width, side_frac, n, rng);
  return mode == MaskMode::patches ? m : m.complement();
}

FidResult fid_n_pipeline(const Classifier& g, const Dataset& test, const Completer& complete, int n,
                         MaskMode mode, double side_frac, std::uint64_t seed) {
  std::vector<std::vector<double>> feats;
  complete_all(g, test, complete, n, mode, side_frac, seed, &feats, nullptr);
  return distance_to_test(g, test, feats);
}

FidResult fid_agg(const Classifier& g, const Dataset& test, const Completer& complete, int n_max,
                  MaskMode mode, double side_frac, std::uint64_t seed) {
  std::vector<std::vector<double>> feats;
  for (int n = 0; n <= n_max; ++n) complete_all(g, test, complete, n, mode, side_frac, seed, &feats, nullptr);
  return distance_to_test(g, test, feats);
}

double inception_score_n(const Classifier& g, const Dataset& test, const Completer& complete, int n,
                         MaskMode mode, double side_frac, std::uint64_t seed) {
  std::vector<std::vector<double>> post;
  complete_all(g, test, complete, n, mode, side_frac, seed, nullptr, &post);
  return is_mutual_information(post);
}

DiversityEstimate pairwise_diversity(const Classifier& g, const Completer& complete,
                                     const MaskedImage& observed, int pairs, Rng& rng) {
  if (pairs < 1) throw config_error("bad_pairs", "diversity needs at least one pair");
  std::vector<double> d;
  d.reserve(static_cast<std::size_t>(pairs));
  for (int i = 0; i < pairs; ++i) {
    const auto fa = image_features(g, complete(observed, rng));
    const auto fb = image_features(g, complete(observed, rng));
    double ss = 0.0;
    for (std::size_t k = 0; k < fa.size(); ++k) ss += (fa[k] - fb[k]) * (fa[k] - fb[k]);
    d.push_back(std::sqrt(ss));
  }
  DiversityEstimate out;
  out.pairs = d.size();
  for (double v : d) out.mean += v;
  out.mean /= static_cast<double>(d.size());
  if (d.size() > 1) {
    double ss = 0.0;
    for (double v : d) ss += (v - out.mean) * (v - out.mean);
    out.se = std::sqrt(ss / static_cast<double>(d.size() - 1) / static_cast<double>(d.size()));
  }
  return out;
}

std::vector<ReconRow> reconstruction_error_report(const hvae::Model& model,
                                                  std::span<const ImageGrid> in_distribution,
                                                  std::span<const ImageGrid> out_of_distribution) {
  std::vector<ReconRow> rows;
  for (std::size_t i = 0; i < in_distribution.size(); ++i) {
    rows.push_back({"in_" + std::to_string(i), true, hvae::reconstruct(model, in_distribution[i]).mean_error});
  }
  for (std::size_t i = 0; i < out_of_distribution.size(); ++i) {
    rows.push_back({"ood_" + std::to_string(i), false,
                    hvae::reconstruct(model, out_of_distribution[i]).mean_error});
  }
  return rows;
}

std::vector<ImageGrid> ood_probes(int height, int width) {
  ImageGrid checker = ImageGrid::blank(height, width);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) checker.pixels[static_cast<std::size_t>(r * width + c)] = (r + c) % 2;
  }
  ImageGrid zeros = ImageGrid::blank(height, width);
  ImageGrid ones = ImageGrid::blank(height, width);
  for (double& p : ones.pixels) p = 1.0;
  return {checker, zeros, ones};
}

void write_metric_csv(std::span<const MetricRow> rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("open_failed", "cannot write " + path.string());
  out << "metric,n_patches,mode,value,seed\n" << std::setprecision(17);
  for (const auto& r : rows) out << r.metric << ',' << r.n_patches << ',' << r.mode << ',' << r.value << ',' << r.seed << '\n';
  if (!out) throw io_error("write_failed", "cannot write " + path.string());
}

}  // namespace aipo
