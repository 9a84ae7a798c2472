// SPDX-License-Identifier: Apache-2.0
#include "aipo/objectives.hpp"

#include <cmath>
#include <numeric>

#include "aipo/error.hpp"

namespace aipo {
namespace {

using hvae::Source;
using hvae::TracedGaussian;
using hvae::WalkRequest;

Var sum_logpdf(const std::vector<Var>& z, const std::vector<TracedGaussian>& heads) {
  Var total = hvae::gaussian_logpdf(z[0], heads[0].mu, heads[0].log_sigma);
  for (std::size_t l = 1; l < z.size(); ++l) {
    total = add(total, hvae::gaussian_logpdf(z[l], heads[l].mu, heads[l].log_sigma));
  }
  return total;
}

Var sum_kl(const std::vector<TracedGaussian>& q, const std::vector<TracedGaussian>& p) {
  Var total = kl_diag_gaussian(q[0], p[0]);
  for (std::size_t l = 1; l < q.size(); ++l) total = add(total, kl_diag_gaussian(q[l], p[l]));
  return total;
}

double item(Var v) { return v.value().item(); }

void check_pair(const ImageGrid& image, const MaskedImage& observed) {
  if (image.height != observed.height() || image.width != observed.width() ||
      image.channels != observed.channels()) {
    throw numeric_error("shape_mismatch", "image and observation extents differ");
  }
}

IdentityCheck summarize(const std::vector<double>& values, double rhs) {
  IdentityCheck out;
  out.samples = values.size();
  const double n = static_cast<double>(values.size());
  out.lhs = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - out.lhs) * (v - out.lhs);
  out.lhs_se = values.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
  out.rhs = rhs;
  return out;
}

}  // namespace

std::vector<double> mask_weights(const MaskedImage& observed) {
  std::vector<double> w;
  w.reserve(observed.observed().size());
  for (std::uint8_t b : observed.mask().bits) {
    for (int c = 0; c < observed.channels(); ++c) w.push_back(b ? 1.0 : 0.0);
  }
  return w;
}

double masked_loglik(std::span<const double> probs, const MaskedImage& observed) {
  if (probs.size() != observed.observed().size()) {
    throw numeric_error("shape_mismatch", "masked_loglik: " + std::to_string(probs.size()) +
                                              " probabilities vs " +
                                              std::to_string(observed.observed().size()) + " pixels");
  }
  const auto& bits = observed.mask().bits;
  const auto C = static_cast<std::size_t>(observed.channels());
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (!bits[i / C]) continue;
    const double x = observed.observed()[i];
    total += x * std::log(probs[i]) + (1.0 - x) * std::log1p(-probs[i]);
  }
  return total;
}

double kl_diag_gaussian(const hvae::DiagGaussian& q, const hvae::DiagGaussian& p) {
  if (q.mu.size() != p.mu.size() || q.log_sigma.size() != q.mu.size() ||
      p.log_sigma.size() != p.mu.size()) {
    throw numeric_error("shape_mismatch", "kl_diag_gaussian: lengths differ");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < q.mu.size(); ++i) {
    const double vq = std::exp(2.0 * q.log_sigma[i]);
    const double vp = std::exp(2.0 * p.log_sigma[i]);
    const double dm = q.mu[i] - p.mu[i];
    total += p.log_sigma[i] - q.log_sigma[i] + (vq + dm * dm) / (2.0 * vp) - 0.5;
  }
  return total;
}

Var kl_diag_gaussian(const TracedGaussian& q, const TracedGaussian& p) {
  // 0.5 exp(2 (lq - lp)) + 0.5 ((mq - mp) exp(-lp))^2 + lp - lq - 0.5
  Var dl = sub(q.log_sigma, p.log_sigma);
  Var ratio = scale(exp(scale(dl, 2.0)), 0.5);
  Var r = mul(sub(q.mu, p.mu), exp(scale(p.log_sigma, -1.0)));
  Var per = sub(add(ratio, scale(mul(r, r), 0.5)), dl);
  return shift(sum(per), -0.5 * static_cast<double>(q.mu.size()));
}

TracedObjective trace_elbo_uncond(const hvae::Model& model, Tape& tape, const ImageGrid& image,
                                  const hvae::GroupNoise& eps, bool analytic_kl, double kl_weight) {
  WalkRequest req;
  req.source = Source::encoder;
  req.prior = true;
  req.encoder = true;
  req.image = &image;
  req.noise = &eps;
  const hvae::Trace tr = hvae::walk(model, tape, req);
  Var recon = hvae::log_likelihood(model, hvae::decoder_output(model, tape, tr.h.back()), image.pixels);
  TracedObjective out;
  out.estimate.reconstruction = item(recon);
  Var latent;
  if (analytic_kl) {
    latent = scale(sum_kl(tr.encoder, tr.prior), -1.0);
    out.estimate.prior = item(latent);
  } else {
    Var lp = sum_logpdf(tr.z, tr.prior);
    Var lq = sum_logpdf(tr.z, tr.encoder);
    latent = sub(lp, lq);
    out.estimate.prior = item(lp);
    out.estimate.encoder = -item(lq);
  }
  out.value = add(recon, kl_weight == 1.0 ? latent : scale(latent, kl_weight));
  out.estimate.value = item(recon) + item(latent);
  return out;
}

TracedObjective trace_o_forward(const hvae::Model& model, Tape& tape, const ImageGrid& image,
                                const MaskedImage& observed, const hvae::GroupNoise& eps) {
  check_pair(image, observed);
  WalkRequest req;
  req.source = Source::encoder;
  req.prior = false;
  req.encoder = true;
  req.partial = true;
  req.image = &image;
  req.observed = &observed;
  req.noise = &eps;
  const hvae::Trace tr = hvae::walk(model, tape, req);
  Var recon = hvae::log_likelihood(model, hvae::decoder_output(model, tape, tr.h.back()), image.pixels);
  Var lqhat = sum_logpdf(tr.z, tr.partial);
  Var lq = sum_logpdf(tr.z, tr.encoder);
  TracedObjective out;
  out.value = sub(add(recon, lqhat), lq);
  out.estimate.reconstruction = item(recon);
  out.estimate.partial = item(lqhat);
  out.estimate.encoder = -item(lq);
  out.estimate.value = item(out.value);
  return out;
}

TracedObjective trace_o_reverse(const hvae::Model& model, Tape& tape, const MaskedImage& observed,
                                const hvae::GroupNoise& eps, bool analytic_kl) {
  WalkRequest req;
  req.source = Source::partial;
  req.prior = true;
  req.partial = true;
  req.observed = &observed;
  req.noise = &eps;
  const hvae::Trace tr = hvae::walk(model, tape, req);
  const std::vector<double> weights = mask_weights(observed);
  Var recon = hvae::log_likelihood(model, hvae::decoder_output(model, tape, tr.h.back()),
                                   observed.observed(), weights);
  TracedObjective out;
  out.estimate.reconstruction = item(recon);
  if (analytic_kl) {
    Var kl = sum_kl(tr.partial, tr.prior);
    out.value = sub(recon, kl);
    out.estimate.prior = -item(kl);
  } else {
    Var lp = sum_logpdf(tr.z, tr.prior);
    Var lqhat = sum_logpdf(tr.z, tr.partial);
    out.value = sub(add(recon, lp), lqhat);
    out.estimate.prior = item(lp);
    out.estimate.partial = -item(lqhat);
  }
  out.estimate.value = item(out.value);
  return out;
}

ObjectiveEstimate elbo_uncond(const hvae::Model& model, const ImageGrid& image,
                              const hvae::GroupNoise& eps, bool analytic_kl) {
  Tape tape(false);
  return trace_elbo_uncond(model, tape, image, eps, analytic_kl).estimate;
}

ObjectiveEstimate o_forward(const hvae::Model& model, const ImageGrid& image,
                            const MaskedImage& observed, const hvae::GroupNoise& eps) {
  Tape tape(false);
  return trace_o_forward(model, tape, image, observed, eps).estimate;
}

ObjectiveEstimate o_reverse(const hvae::Model& model, const MaskedImage& observed,
                            const hvae::GroupNoise& eps, bool analytic_kl) {
  Tape tape(false);
  return trace_o_reverse(model, tape, observed, eps, analytic_kl).estimate;
}

IdentityCheck elbo_joint_identity_check(const hvae::Model& surrogate, const lg::LinearGaussianModel& lg,
                                        const lg::LinearGaussianEncoder& enc,
                                        const lg::FullGaussian& data, std::size_t samples, Rng& rng) {
  if (surrogate.config.likelihood != hvae::Likelihood::gaussian ||
      surrogate.config.pixels() != lg.obs_dim()) {
    throw config_error("unsupported", "identity check needs a linear-Gaussian surrogate");
  }
  std::vector<double> values;
  values.reserve(samples);
  for (std::size_t s = 0; s < samples; ++s) {
    const ImageGrid x = lg::as_image(data.sample(rng));
    const hvae::GroupNoise eps = hvae::draw_noise(surrogate.config, rng);
    values.push_back(elbo_uncond(surrogate, x, eps).value);
  }
  const double rhs = -data.entropy() - lg::kl_between_gaussians_full(lg::joint_with_encoder(enc, data), lg::joint(lg));
  return summarize(values, rhs);
}

IdentityCheck elbo_joint_identity_check(const hvae::Model& surrogate, const lg::LinearGaussianModel& lg,
                                        const lg::LinearGaussianEncoder& enc,
                                        std::span<const Eigen::VectorXd> points, std::size_t samples,
                                        Rng& rng) {
  if (surrogate.config.likelihood != hvae::Likelihood::gaussian ||
      surrogate.config.pixels() != lg.obs_dim()) {
    throw config_error("unsupported", "identity check needs a linear-Gaussian surrogate");
  }
  if (points.empty()) throw config_error("empty_dataset", "identity check needs at least one point");
  std::vector<int> all(static_cast<std::size_t>(lg.obs_dim()));
  std::iota(all.begin(), all.end(), 0);
  double rhs = 0.0;
  for (const auto& x : points) {
    const std::span<const double> y(x.data(), static_cast<std::size_t>(x.size()));
    rhs += lg::log_marginal(lg, all, y) -
           lg::kl_between_gaussians_full(enc.at(x), lg::posterior_given_subset(lg, all, y));
  }
  rhs /= static_cast<double>(points.size());
  std::vector<double> values;
  values.reserve(samples);
  for (std::size_t s = 0; s < samples; ++s) {
    const ImageGrid x = lg::as_image(points[s % points.size()]);
    const hvae::GroupNoise eps = hvae::draw_noise(surrogate.config, rng);
    values.push_back(elbo_uncond(surrogate, x, eps).value);
  }
  return summarize(values, rhs);
}

}  // namespace aipo
