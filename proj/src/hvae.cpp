// SPDX-License-Identifier: Apache-2.0
#include "aipo/hvae.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "aipo/error.hpp"

namespace aipo::hvae {
namespace {

// Init gain for tanh MLPs. Gaussian heads use unit gain on the output layer.
constexpr double kTanhGain = 5.0 / 3.0;

std::string group_name(const char* head, int l) { return std::string(head) + ".l" + std::to_string(l); }

void add_head(ParamStore& p, const std::string& prefix, HeadKind kind, int in, int out, int hidden,
              Rng& rng, double out_gain = kTanhGain) {
  const auto i = static_cast<std::size_t>(in), o = static_cast<std::size_t>(out),
             h = static_cast<std::size_t>(hidden);
  if (kind == HeadKind::linear) {
    p.insert_or_assign(prefix + ".W", init_weight(o, i, rng));
    p.insert_or_assign(prefix + ".b", NumArray::zeros({o}));
  } else {
    p.insert_or_assign(prefix + ".W1", init_weight(h, i, rng, kTanhGain));
    p.insert_or_assign(prefix + ".b1", NumArray::zeros({h}));
    p.insert_or_assign(prefix + ".W2", init_weight(o, h, rng, out_gain));
    p.insert_or_assign(prefix + ".b2", NumArray::zeros({o}));
  }
}

const NumArray& lookup(const ParamStore& p, const std::string& name) {
  auto it = p.find(name);
  if (it == p.end()) throw config_error("missing_param", "parameter " + name + " not in model");
  return it->second;
}

Var head(const Model& m, Tape& t, const std::string& prefix, HeadKind kind, Var x) {
  const ParamStore& p = m.params;
  if (kind == HeadKind::linear) {
    return add(matvec(t.param(prefix + ".W", lookup(p, prefix + ".W")), x),
               t.param(prefix + ".b", lookup(p, prefix + ".b")));
  }
  Var a = tanh(add(matvec(t.param(prefix + ".W1", lookup(p, prefix + ".W1")), x),
                   t.param(prefix + ".b1", lookup(p, prefix + ".b1"))));
  return add(matvec(t.param(prefix + ".W2", lookup(p, prefix + ".W2")), a),
             t.param(prefix + ".b2", lookup(p, prefix + ".b2")));
}

TracedGaussian split_gaussian(Var out, int d) {
  const auto n = static_cast<std::size_t>(d);
  return {slice(out, 0, n), clamp(slice(out, n, n), kLogSigmaMin, kLogSigmaMax)};
}

Var features(const Model& m, Tape& t, const char* prefix, std::vector<double> input) {
  Var x = t.constant(NumArray::vector(std::move(input)));
  if (m.config.features == FeatureKind::identity) return x;
  return head(m, t, prefix, HeadKind::mlp, x);
}

void check_image(const HvaeConfig& c, int h, int w, int ch) {
  if (h != c.height || w != c.width || ch != c.channels) {
    throw numeric_error("shape_mismatch", "image " + std::to_string(h) + "x" + std::to_string(w) +
                                              "x" + std::to_string(ch) + " vs model " +
                                              std::to_string(c.height) + "x" +
                                              std::to_string(c.width) + "x" +
                                              std::to_string(c.channels));
  }
}

std::vector<double> values_of(Var v) { return v.value().values(); }

DiagGaussian to_diag(const TracedGaussian& g) { return {values_of(g.mu), values_of(g.log_sigma)}; }

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

int HvaeConfig::latent_dim() const {
  int s = 0;
  for (int d : dims) s += d;
  return s;
}

int HvaeConfig::encoder_feature_width() const {
  return features == FeatureKind::identity ? pixels() : feature;
}

int HvaeConfig::partial_feature_width() const {
  return features == FeatureKind::identity ? 2 * pixels() : feature;
}

void HvaeConfig::validate() const {
  if (dims.empty()) throw config_error("bad_hvae", "at least one latent group is required");
  for (int d : dims) {
    if (d < 1) throw config_error("bad_hvae", "latent group widths must be >= 1");
  }
  if (hidden < 1 || state < 1 || feature < 1) throw config_error("bad_hvae", "widths must be >= 1");
  if (height < 1 || width < 1 || channels < 1) throw config_error("bad_hvae", "image extents must be >= 1");
  if (likelihood == Likelihood::gaussian && !(noise_std > 0.0)) {
    throw config_error("bad_hvae", "Gaussian likelihood needs noise_std > 0");
  }
}

bool is_model_param(std::string_view n) {
  return n == "h0" || has_prefix(n, "prior.") || has_prefix(n, "upd.") || has_prefix(n, "dec.");
}
bool is_encoder_param(std::string_view n) { return has_prefix(n, "feat.") || has_prefix(n, "enc."); }
bool is_partial_param(std::string_view n) { return has_prefix(n, "pfeat.") || has_prefix(n, "penc."); }

Model init_model(const HvaeConfig& config, Rng& rng) {
  config.validate();
  Model m{config, {}};
  const int S = config.state, H = config.hidden, P = config.pixels();
  m.params.emplace("h0", NumArray::zeros({static_cast<std::size_t>(S)}));
  if (config.features == FeatureKind::mlp) {
    add_head(m.params, "feat", HeadKind::mlp, P, config.feature, H, rng);
    add_head(m.params, "pfeat", HeadKind::mlp, 2 * P, config.feature, H, rng);
  }
  for (int l = 1; l <= config.groups(); ++l) {
    const int d = config.dims[static_cast<std::size_t>(l - 1)];
    add_head(m.params, group_name("prior", l), config.model_heads, S, 2 * d, H, rng, 1.0);
    add_head(m.params, group_name("upd", l), config.model_heads, S + d, S, H, rng);
    add_head(m.params, group_name("enc", l), config.model_heads,
             S + config.encoder_feature_width(), 2 * d, H, rng, 1.0);
    add_head(m.params, group_name("penc", l), config.partial_heads,
             S + config.partial_feature_width(), 2 * d, H, rng, 1.0);
  }
  add_head(m.params, "dec", config.model_heads, S, P, H, rng);
  return m;
}

void init_partial_from_encoder(Model& model) {
  for (auto& [name, value] : model.params) {
    std::string source;
    if (has_prefix(name, "pfeat.")) source = name.substr(1);
    else if (has_prefix(name, "penc.")) source = name.substr(1);
    else continue;
    auto it = model.params.find(source);
    if (it == model.params.end()) continue;
    const NumArray& src = it->second;
    if (src.shape() == value.shape()) {
      value = src;
    } else if (src.rank() == 2 && value.rank() == 2 && src.rows() == value.rows() &&
               src.cols() < value.cols()) {
      std::vector<double> w(value.size(), 0.0);
      for (std::size_t r = 0; r < src.rows(); ++r) {
        for (std::size_t c = 0; c < src.cols(); ++c) w[r * value.cols() + c] = src.at(r, c);
      }
      value = NumArray(value.shape(), std::move(w));
    }
  }
}

ParamStore to_checkpoint(const Model& model) {
  const HvaeConfig& c = model.config;
  std::vector<double> meta{1.0, static_cast<double>(c.groups())};
  for (int d : c.dims) meta.push_back(d);
  for (double v : {static_cast<double>(c.hidden), static_cast<double>(c.state),
                   static_cast<double>(c.feature), static_cast<double>(c.height),
                   static_cast<double>(c.width), static_cast<double>(c.channels),
                   static_cast<double>(c.model_heads), static_cast<double>(c.partial_heads),
                   static_cast<double>(c.features), static_cast<double>(c.likelihood),
                   c.noise_std}) {
    meta.push_back(v);
  }
  ParamStore out = model.params;
  out.insert_or_assign("meta.hvae", NumArray::vector(std::move(meta)));
  return out;
}

Model from_checkpoint(const ParamStore& store) {
  auto it = store.find("meta.hvae");
  if (it == store.end()) throw config_error("not_a_model", "checkpoint has no meta.hvae entry");
  const auto& m = it->second.values();
  if (m.size() < 2 || m[0] != 1.0) throw config_error("not_a_model", "unknown meta.hvae layout");
  const auto groups = static_cast<std::size_t>(m[1]);
  if (m.size() != 2 + groups + 11) throw config_error("not_a_model", "malformed meta.hvae entry");
  HvaeConfig c;
  c.dims.assign(m.begin() + 2, m.begin() + 2 + static_cast<std::ptrdiff_t>(groups));
  std::size_t k = 2 + groups;
  c.hidden = static_cast<int>(m[k++]);
  c.state = static_cast<int>(m[k++]);
  c.feature = static_cast<int>(m[k++]);
  c.height = static_cast<int>(m[k++]);
  c.width = static_cast<int>(m[k++]);
  c.channels = static_cast<int>(m[k++]);
  c.model_heads = static_cast<HeadKind>(static_cast<int>(m[k++]));
  c.partial_heads = static_cast<HeadKind>(static_cast<int>(m[k++]));
  c.features = static_cast<FeatureKind>(static_cast<int>(m[k++]));
  c.likelihood = static_cast<Likelihood>(static_cast<int>(m[k++]));
  c.noise_std = m[k++];
  c.validate();
  Model model{c, {}};
  for (const auto& [name, value] : store) {
    if (!has_prefix(name, "meta.")) model.params.emplace(name, value);
  }
  return model;
}

GroupNoise draw_noise(const HvaeConfig& config, Rng& rng) {
  GroupNoise eps;
  for (int d : config.dims) {
    std::vector<double> e(static_cast<std::size_t>(d));
    for (double& v : e) v = rng.normal();
    eps.push_back(std::move(e));
  }
  return eps;
}

GroupNoise zero_noise(const HvaeConfig& config) {
  GroupNoise eps;
  for (int d : config.dims) eps.emplace_back(static_cast<std::size_t>(d), 0.0);
  return eps;
}

Trace walk(const Model& model, Tape& tape, const WalkRequest& req) {
  const HvaeConfig& c = model.config;
  const int L = c.groups();
  const GroupNoise* source_values = req.source == Source::given ? req.given : req.noise;
  if (source_values == nullptr || source_values->size() != static_cast<std::size_t>(L)) {
    throw numeric_error("shape_mismatch", "noise/latents must provide " + std::to_string(L) + " groups");
  }
  for (int l = 0; l < L; ++l) {
    if ((*source_values)[static_cast<std::size_t>(l)].size() != static_cast<std::size_t>(c.dims[static_cast<std::size_t>(l)])) {
      throw numeric_error("shape_mismatch", "group " + std::to_string(l + 1) + " has width " +
                                                std::to_string((*source_values)[static_cast<std::size_t>(l)].size()) +
                                                ", expected " + std::to_string(c.dims[static_cast<std::size_t>(l)]));
    }
  }
  const bool need_encoder = req.encoder || req.source == Source::encoder;
  const bool need_partial = req.partial || req.source == Source::partial;
  const bool need_prior = req.prior || req.source == Source::prior;

  Var enc_feat, part_feat;
  if (need_encoder) {
    if (req.image == nullptr) throw numeric_error("missing_input", "encoder heads need an image");
    check_image(c, req.image->height, req.image->width, req.image->channels);
    enc_feat = features(model, tape, "feat", req.image->pixels);
  }
  if (need_partial) {
    if (req.observed == nullptr) throw numeric_error("missing_input", "partial heads need an observation");
    check_image(c, req.observed->height(), req.observed->width(), req.observed->channels());
    part_feat = features(model, tape, "pfeat", req.observed->network_input());
  }

  Trace tr;
  Var h = tape.param("h0", lookup(model.params, "h0"));
  tr.h.push_back(h);
  for (int l = 1; l <= L; ++l) {
    const int d = c.dims[static_cast<std::size_t>(l - 1)];
    const auto& src = (*source_values)[static_cast<std::size_t>(l - 1)];
    if (need_prior) tr.prior.push_back(split_gaussian(head(model, tape, group_name("prior", l), c.model_heads, h), d));
    if (need_encoder) {
      tr.encoder.push_back(split_gaussian(
          head(model, tape, group_name("enc", l), c.model_heads, concat({h, enc_feat})), d));
    }
    if (need_partial) {
      tr.partial.push_back(split_gaussian(
          head(model, tape, group_name("penc", l), c.partial_heads, concat({h, part_feat})), d));
    }
    Var z;
    if (req.source == Source::given) {
      z = tape.constant(src);
    } else {
      const TracedGaussian& g = req.source == Source::prior     ? tr.prior.back()
                                : req.source == Source::encoder ? tr.encoder.back()
                                                                : tr.partial.back();
      z = gaussian_reparam(g.mu, g.log_sigma, tape.constant(src));
    }
    tr.z.push_back(z);
    h = add(h, head(model, tape, group_name("upd", l), c.model_heads, concat({h, z})));
    tr.h.push_back(h);
  }
  return tr;
}

Var decoder_output(const Model& model, Tape& tape, Var h_last) {
  Var out = head(model, tape, "dec", model.config.model_heads, h_last);
  if (model.config.likelihood == Likelihood::bernoulli) return clamp(out, -kLogitClamp, kLogitClamp);
  return out;
}

Var log_likelihood(const Model& model, Var out, std::span<const double> target,
                   std::span<const double> weights) {
  Tape& t = *out.tape;
  if (target.size() != out.size() || (!weights.empty() && weights.size() != out.size())) {
    throw numeric_error("shape_mismatch", "likelihood target/weights do not match decoder output");
  }
  Var x = t.constant(target);
  Var per_pixel;
  if (model.config.likelihood == Likelihood::bernoulli) {
    per_pixel = sub(mul(x, out), softplus(out));
  } else {
    const double inv = 1.0 / model.config.noise_std;
    Var r = scale(sub(x, out), inv);
    per_pixel = shift(scale(mul(r, r), -0.5),
                      -std::log(model.config.noise_std) - 0.5 * std::log(2.0 * std::numbers::pi));
  }
  if (!weights.empty()) per_pixel = mul(per_pixel, t.constant(weights));
  return sum(per_pixel);
}

Var gaussian_logpdf(Var z, Var mu, Var log_sigma) {
  Var r = mul(sub(z, mu), exp(scale(log_sigma, -1.0)));
  Var per = sub(scale(mul(r, r), -0.5), log_sigma);
  const double d = static_cast<double>(z.size());
  return shift(sum(per), -0.5 * d * std::log(2.0 * std::numbers::pi));
}

LatentHierarchy to_values(const Trace& tr) {
  LatentHierarchy out;
  for (Var z : tr.z) out.z.push_back(values_of(z));
  for (Var h : tr.h) out.h.push_back(values_of(h));
  for (const auto& g : tr.prior) out.prior.push_back(to_diag(g));
  for (const auto& g : tr.encoder) out.encoder.push_back(to_diag(g));
  for (const auto& g : tr.partial) out.partial.push_back(to_diag(g));
  return out;
}

LatentHierarchy prior_pass(const Model& model, const GroupNoise& eps) {
  Tape tape(false);
  WalkRequest req;
  req.source = Source::prior;
  req.noise = &eps;
  return to_values(walk(model, tape, req));
}

LatentHierarchy encode_pass(const Model& model, const ImageGrid& image, const GroupNoise& eps) {
  Tape tape(false);
  WalkRequest req;
  req.source = Source::encoder;
  req.encoder = true;
  req.image = &image;
  req.noise = &eps;
  return to_values(walk(model, tape, req));
}

LatentHierarchy partial_pass(const Model& model, const MaskedImage& observed, const GroupNoise& eps) {
  Tape tape(false);
  WalkRequest req;
  req.source = Source::partial;
  req.partial = true;
  req.observed = &observed;
  req.noise = &eps;
  return to_values(walk(model, tape, req));
}

LogDensities teacher_forced_logdensities(const Model& model, const ImageGrid& image,
                                         const MaskedImage& observed,
                                         const std::vector<std::vector<double>>& z) {
  Tape tape(false);
  WalkRequest req;
  req.source = Source::given;
  req.prior = req.encoder = req.partial = true;
  req.image = &image;
  req.observed = &observed;
  req.given = &z;
  const Trace tr = walk(model, tape, req);
  LogDensities out;
  for (std::size_t l = 0; l < tr.z.size(); ++l) {
    out.log_p += gaussian_logpdf(tr.z[l], tr.prior[l].mu, tr.prior[l].log_sigma).value().item();
    out.log_q += gaussian_logpdf(tr.z[l], tr.encoder[l].mu, tr.encoder[l].log_sigma).value().item();
    out.log_qhat += gaussian_logpdf(tr.z[l], tr.partial[l].mu, tr.partial[l].log_sigma).value().item();
  }
  return out;
}

namespace {

double forced_density(const Model& model, WalkRequest req, const GroupNoise& z) {
  Tape tape(false);
  req.source = Source::given;
  req.given = &z;
  const Trace tr = walk(model, tape, req);
  const auto& heads = req.encoder ? tr.encoder : req.partial ? tr.partial : tr.prior;
  double total = 0.0;
  for (std::size_t l = 0; l < tr.z.size(); ++l) {
    total += gaussian_logpdf(tr.z[l], heads[l].mu, heads[l].log_sigma).value().item();
  }
  return total;
}

}  // namespace

double encoder_log_density(const Model& model, const ImageGrid& image, const GroupNoise& z) {
  WalkRequest req;
  req.prior = false;
  req.encoder = true;
  req.image = &image;
  return forced_density(model, req, z);
}

double partial_log_density(const Model& model, const MaskedImage& observed, const GroupNoise& z) {
  WalkRequest req;
  req.prior = false;
  req.partial = true;
  req.observed = &observed;
  return forced_density(model, req, z);
}

double prior_log_density(const Model& model, const GroupNoise& z) { return forced_density(model, {}, z); }

std::vector<double> decode_bernoulli(const Model& model, std::span<const double> h_last) {
  Tape tape(false);
  Var out = decoder_output(model, tape, tape.constant(h_last));
  std::vector<double> v = out.value().values();
  if (model.config.likelihood == Likelihood::bernoulli) {
    for (double& p : v) p = logistic(p);
  }
  return v;
}

ImageGrid sample_completion(const Model& model, const MaskedImage& observed, Rng& rng, bool paste) {
  const HvaeConfig& c = model.config;
  const GroupNoise eps = draw_noise(c, rng);
  const LatentHierarchy z = partial_pass(model, observed, eps);
  const std::vector<double> params = decode_bernoulli(model, z.h.back());
  ImageGrid img = ImageGrid::blank(c.height, c.width, c.channels);
  for (std::size_t i = 0; i < params.size(); ++i) {
    img.pixels[i] = c.likelihood == Likelihood::bernoulli
                        ? (rng.uniform() < params[i] ? 1.0 : 0.0)
                        : params[i] + c.noise_std * rng.normal();
  }
  return paste ? paste_observed(img, observed) : img;
}

Reconstruction reconstruct(const Model& model, const ImageGrid& image) {
  const HvaeConfig& c = model.config;
  const LatentHierarchy z = encode_pass(model, image, zero_noise(c));
  const std::vector<double> params = decode_bernoulli(model, z.h.back());
  Reconstruction r;
  r.image = ImageGrid::blank(c.height, c.width, c.channels, image.label);
  r.pixel_error.resize(params.size());
  double total = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    r.image.pixels[i] = c.likelihood == Likelihood::bernoulli ? (params[i] > 0.5 ? 1.0 : 0.0) : params[i];
    r.pixel_error[i] = std::abs(r.image.pixels[i] - image.pixels[i]);
    total += r.pixel_error[i];
  }
  r.mean_error = params.empty() ? 0.0 : total / static_cast<double>(params.size());
  return r;
}

}  // namespace aipo::hvae
