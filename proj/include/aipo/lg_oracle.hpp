// SPDX-License-Identifier: Apache-2.0
//
// Linear-Gaussian world with closed-form posteriors, marginals and KLs:
//
//   z ~ N(0, I_d),   x = W z + b + noise_std * eps,   eps ~ N(0, I_D)
//
// An hvae with one latent per group, linear heads and identity features
// represents this model and its exact posterior (see to_surrogate).
#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "aipo/hvae.hpp"
#include "aipo/rng.hpp"

namespace aipo::lg {

struct FullGaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;

  int dim() const { return static_cast<int>(mean.size()); }
  double entropy() const;
  double logpdf(const Eigen::VectorXd& x) const;
  Eigen::VectorXd sample(Rng& rng) const;

  static FullGaussian standard(int dim);
};

struct LinearGaussianModel {
  Eigen::MatrixXd W;  // D x d
  Eigen::VectorXd b;  // D
  double noise_std = 1.0;

  int latent_dim() const { return static_cast<int>(W.cols()); }
  int obs_dim() const { return static_cast<int>(W.rows()); }
  void validate() const;

  /// W entries N(0, 1), b entries N(0, 0.25).
  static LinearGaussianModel random(int d, int D, double noise_std, Rng& rng);
};

/// Exact p(z | x_S = y). An empty S returns the prior.
FullGaussian posterior_given_subset(const LinearGaussianModel& m, std::span<const int> S,
                                    std::span<const double> y);
/// log N(y; b_S, W_S W_S^T + noise^2 I). Empty S gives 0.
double log_marginal(const LinearGaussianModel& m, std::span<const int> S, std::span<const double> y);
/// Marginal distribution of the full observation vector.
FullGaussian observation_marginal(const LinearGaussianModel& m);
/// Joint distribution of (z, x).
FullGaussian joint(const LinearGaussianModel& m);

double kl_between_gaussians_full(const FullGaussian& a, const FullGaussian& b);

/// Conditional Gaussian q(z | x) = N(A x + a, cov).
struct LinearGaussianEncoder {
  Eigen::MatrixXd A;  // d x D
  Eigen::VectorXd a;  // d
  Eigen::MatrixXd cov;

  FullGaussian at(const Eigen::VectorXd& x) const;
};

/// The exact posterior p(z | x) over all D observations.
LinearGaussianEncoder exact_posterior_encoder(const LinearGaussianModel& m);

/// Joint of x ~ data, z ~ enc(. | x).
FullGaussian joint_with_encoder(const LinearGaussianEncoder& enc, const FullGaussian& data);

/// Observed indices of a masked 1 x D observation and their values.
struct Subset {
  std::vector<int> indices;
  std::vector<double> values;
};
Subset observed_subset(const MaskedImage& observed);

/// hvae instance with groups of width 1 reproducing the model exactly
/// (prior, decoder, Gaussian likelihood) with the encoder written in
/// autoregressive form. Images are 1 x D x 1. Partial heads use the given
/// kind and are freshly initialized from rng.
hvae::Model to_surrogate(const LinearGaussianModel& m, const LinearGaussianEncoder& enc,
                         hvae::HeadKind partial_heads, int hidden, Rng& rng);

/// Observation vector as a 1 x D x 1 image.
ImageGrid as_image(const Eigen::VectorXd& x);
Eigen::VectorXd to_vector(std::span<const double> v);
std::vector<std::vector<double>> to_groups(const Eigen::VectorXd& z);
Eigen::VectorXd from_groups(const std::vector<std::vector<double>>& z);

}  // namespace aipo::lg
