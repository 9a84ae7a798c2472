// SPDX-License-Identifier: Apache-2.0
//
// Training objectives for the hierarchical VAE, all single-sample
// pathwise estimators in nats:
//
//   elbo_uncond  log p(I|z) + log p(z) - log q(z|I),          z ~ q(.|I)
//   o_forward    log p(I|z) + log q^(z|I^) - log q(z|I),      z ~ q(.|I)
//   o_reverse    log p(I^|z) + log p(z) - log q^(z|I^),       z ~ q^(.|I^)
//
// where log p(I^|z) sums the likelihood over observed pixels only. The
// mask-probability factor of p(I^|z) does not depend on any parameter and
// is dropped.
#pragma once

#include <span>
#include <vector>

#include "aipo/corruption.hpp"
#include "aipo/hvae.hpp"
#include "aipo/lg_oracle.hpp"
#include "aipo/tape.hpp"

namespace aipo {

/// Objective value with its signed terms; value is their sum.
struct ObjectiveEstimate {
  double value = 0.0;
  double reconstruction = 0.0;
  double prior = 0.0;    // + log p(z), or -KL(q || p) with the analytic option
  double encoder = 0.0;  // - log q(z|I)
  double partial = 0.0;  // + log q^ (forward) or - log q^ (reverse)
  std::size_t samples = 1;

  double breakdown_sum() const { return reconstruction + prior + encoder + partial; }
};

/// Traced objective: the scalar node for backward() plus the value breakdown.
struct TracedObjective {
  Var value;
  ObjectiveEstimate estimate;
};

/// Per-pixel weights (mask repeated per channel).
std::vector<double> mask_weights(const MaskedImage& observed);

/// Bernoulli log-pmf summed over observed pixels.
double masked_loglik(std::span<const double> probs, const MaskedImage& observed);

double kl_diag_gaussian(const hvae::DiagGaussian& q, const hvae::DiagGaussian& p);
/// Traced version of the same closed form.
Var kl_diag_gaussian(const hvae::TracedGaussian& q, const hvae::TracedGaussian& p);

/// kl_weight scales the latent terms of the traced value only; the estimate
/// always reports the unweighted ELBO.
TracedObjective trace_elbo_uncond(const hvae::Model& model, Tape& tape, const ImageGrid& image,
                                  const hvae::GroupNoise& eps, bool analytic_kl = false,
                                  double kl_weight = 1.0);
TracedObjective trace_o_forward(const hvae::Model& model, Tape& tape, const ImageGrid& image,
                                const MaskedImage& observed, const hvae::GroupNoise& eps);
TracedObjective trace_o_reverse(const hvae::Model& model, Tape& tape, const MaskedImage& observed,
                                const hvae::GroupNoise& eps, bool analytic_kl = false);

ObjectiveEstimate elbo_uncond(const hvae::Model& model, const ImageGrid& image,
                              const hvae::GroupNoise& eps, bool analytic_kl = false);
ObjectiveEstimate o_forward(const hvae::Model& model, const ImageGrid& image,
                            const MaskedImage& observed, const hvae::GroupNoise& eps);
ObjectiveEstimate o_reverse(const hvae::Model& model, const MaskedImage& observed,
                            const hvae::GroupNoise& eps, bool analytic_kl = false);

struct IdentityCheck {
  double lhs = 0.0;     // Monte Carlo mean of the ELBO over the data distribution
  double lhs_se = 0.0;  // its standard error
  double rhs = 0.0;     // closed form
  std::size_t samples = 0;
};

/// Averaged ELBO against its closed form on a linear-Gaussian surrogate whose
/// encoder is enc. For continuous data x ~ data:
///   E[ELBO] = -H[data] - KL(data(x) enc(z|x) || p(z, x)).
IdentityCheck elbo_joint_identity_check(const hvae::Model& surrogate, const lg::LinearGaussianModel& lg,
                                        const lg::LinearGaussianEncoder& enc,
                                        const lg::FullGaussian& data, std::size_t samples, Rng& rng);

/// Same check for an empirical dataset of points x_i:
///   mean_i ELBO(x_i) = mean_i [ log p(x_i) - KL(enc(z|x_i) || p(z|x_i)) ].
IdentityCheck elbo_joint_identity_check(const hvae::Model& surrogate, const lg::LinearGaussianModel& lg,
                                        const lg::LinearGaussianEncoder& enc,
                                        std::span<const Eigen::VectorXd> points, std::size_t samples,
                                        Rng& rng);

}  // namespace aipo
