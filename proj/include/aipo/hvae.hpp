// SPDX-License-Identifier: Apache-2.0
//
// Hierarchical VAE with a top-down prior, a full encoder q(z|I) and a
// partial encoder q^(z|I^) that conditions on a masked image. All three
// share the decoder's hidden-state recursion:
//
//   h_0 fixed, (mu_l, log_sigma_l) = head_l(h_{l-1}, features),
//   z_l = mu_l + exp(log_sigma_l) * eps_l,   h_l = h_{l-1} + U_l(h_{l-1}, z_l)
//
// Parameter names:
//   h0                                    initial hidden state
//   prior.l{l}.{W1,b1,W2,b2}              prior head P_l(h)
//   upd.l{l}.*                            update U_l([h, z])
//   dec.*                                 decoder output head D(h_L)
//   feat.*                                image features e(I)
//   enc.l{l}.*                            encoder head E_l([h, e(I)])
//   pfeat.*                               masked-image features e^(I^)
//   penc.l{l}.*                           partial head E^_l([h, e^(I^)])
// Linear heads use {W,b} instead of {W1,b1,W2,b2}. Groups are 1-based.
#pragma once

#include <optional>
#include <span>
#include <vector>

#include "aipo/corruption.hpp"
#include "aipo/image.hpp"
#include "aipo/params.hpp"
#include "aipo/rng.hpp"
#include "aipo/tape.hpp"

namespace aipo::hvae {

enum class HeadKind { mlp, linear };
enum class FeatureKind { mlp, identity };
enum class Likelihood { bernoulli, gaussian };

inline constexpr double kLogSigmaMin = -8.0;
inline constexpr double kLogSigmaMax = 8.0;
inline constexpr double kLogitClamp = 15.0;

struct HvaeConfig {
  std::vector<int> dims{8, 16};
  int hidden = 128;
  int state = 64;
  int feature = 64;
  int height = 16;
  int width = 16;
  int channels = 1;
  HeadKind model_heads = HeadKind::mlp;
  HeadKind partial_heads = HeadKind::mlp;
  FeatureKind features = FeatureKind::mlp;
  Likelihood likelihood = Likelihood::bernoulli;
  double noise_std = 1.0;  // Gaussian likelihood only

  int groups() const { return static_cast<int>(dims.size()); }
  int pixels() const { return height * width * channels; }
  int latent_dim() const;
  int encoder_feature_width() const;
  int partial_feature_width() const;
  void validate() const;

  friend bool operator==(const HvaeConfig&, const HvaeConfig&) = default;
};

struct Model {
  HvaeConfig config;
  ParamStore params;
};

bool is_model_param(std::string_view name);    // theta
bool is_encoder_param(std::string_view name);  // phi
bool is_partial_param(std::string_view name);  // phi-hat

/// Fresh parameters for theta, phi and phi-hat.
Model init_model(const HvaeConfig& config, Rng& rng);

/// Copy encoder weights into the partial encoder where shapes align. A
/// partial matrix with the same row count and extra columns receives the
/// encoder's columns first and zeros in the remainder, so that an all-ones
/// mask reproduces the encoder exactly.
void init_partial_from_encoder(Model& model);

/// Checkpoint representation: parameters plus a "meta.hvae" entry.
ParamStore to_checkpoint(const Model& model);
Model from_checkpoint(const ParamStore& store);

struct DiagGaussian {
  std::vector<double> mu;
  std::vector<double> log_sigma;
  friend bool operator==(const DiagGaussian&, const DiagGaussian&) = default;
};

struct LatentHierarchy {
  std::vector<std::vector<double>> z;  // z_1..z_L
  std::vector<std::vector<double>> h;  // h_0..h_L
  std::vector<DiagGaussian> prior;
  std::vector<DiagGaussian> encoder;
  std::vector<DiagGaussian> partial;
  friend bool operator==(const LatentHierarchy&, const LatentHierarchy&) = default;
};

using GroupNoise = std::vector<std::vector<double>>;

/// Standard-normal noise for every group.
GroupNoise draw_noise(const HvaeConfig& config, Rng& rng);
GroupNoise zero_noise(const HvaeConfig& config);

// ---------------------------------------------------------------------------
// Traced evaluation, used by the objectives.

struct TracedGaussian {
  Var mu;
  Var log_sigma;
};

struct Trace {
  std::vector<Var> z;
  std::vector<Var> h;
  std::vector<TracedGaussian> prior;
  std::vector<TracedGaussian> encoder;
  std::vector<TracedGaussian> partial;
};

enum class Source { prior, encoder, partial, given };

struct WalkRequest {
  Source source = Source::prior;
  bool prior = true;
  bool encoder = false;
  bool partial = false;
  const ImageGrid* image = nullptr;        // required for encoder heads
  const MaskedImage* observed = nullptr;   // required for partial heads
  const GroupNoise* noise = nullptr;       // required unless source == given
  const GroupNoise* given = nullptr;       // required when source == given
};

/// Runs the hidden-state recursion, sampling z from the requested source
/// and evaluating the requested heads at every h_{l-1}.
Trace walk(const Model& model, Tape& tape, const WalkRequest& request);

/// Decoder output: clamped logits (Bernoulli) or means (Gaussian).
Var decoder_output(const Model& model, Tape& tape, Var h_last);

/// Sum over weighted pixels of log p(x | decoder output). weights == nullptr
/// means every pixel counts.
Var log_likelihood(const Model& model, Var decoder_out, std::span<const double> target,
                   std::span<const double> weights = {});

/// log N(z; mu, exp(log_sigma)^2), summed over entries.
Var gaussian_logpdf(Var z, Var mu, Var log_sigma);

LatentHierarchy to_values(const Trace& trace);

// ---------------------------------------------------------------------------
// Value-level operations.

LatentHierarchy prior_pass(const Model& model, const GroupNoise& eps);
LatentHierarchy encode_pass(const Model& model, const ImageGrid& image, const GroupNoise& eps);
LatentHierarchy partial_pass(const Model& model, const MaskedImage& observed, const GroupNoise& eps);

struct LogDensities {
  double log_q = 0.0;      // full encoder
  double log_qhat = 0.0;   // partial encoder
  double log_p = 0.0;      // prior
};

/// Densities of a supplied z under the three hierarchies, all evaluated on
/// the hidden-state trajectory that z induces.
LogDensities teacher_forced_logdensities(const Model& model, const ImageGrid& image,
                                         const MaskedImage& observed,
                                         const std::vector<std::vector<double>>& z);

/// log q(z|I), log q^(z|I^) or log p(z) alone, teacher-forced.
double encoder_log_density(const Model& model, const ImageGrid& image, const GroupNoise& z);
double partial_log_density(const Model& model, const MaskedImage& observed, const GroupNoise& z);
double prior_log_density(const Model& model, const GroupNoise& z);

/// Bernoulli pixel probabilities sigmoid(clamp(D(h_L))) (Gaussian: means).
std::vector<double> decode_bernoulli(const Model& model, std::span<const double> h_last);

/// z ~ q^(.|observed), pixels ~ p(I|z); optionally paste the observation.
ImageGrid sample_completion(const Model& model, const MaskedImage& observed, Rng& rng, bool paste);

struct Reconstruction {
  ImageGrid image;
  std::vector<double> pixel_error;
  double mean_error = 0.0;
};

/// Posterior-mean encoding (eps = 0) decoded and thresholded at 0.5.
Reconstruction reconstruct(const Model& model, const ImageGrid& image);

}  // namespace aipo::hvae
