// SPDX-License-Identifier: Apache-2.0
#include "scenarios.hpp"

#include <cmath>

#include "aipo/config.hpp"
#include "aipo/corruption.hpp"

namespace aipo::testing {

// ---------------------------------------------------------------------------

Example LgScenario::draw(Rng& rng) const {
  const Eigen::VectorXd x = marginal.sample(rng);
  Mask m = Mask::zeros(1, model.obs_dim());
  for (auto& b : m.bits) b = rng.uniform() < 0.5 ? 1 : 0;
  ImageGrid img = lg::as_image(x);
  MaskedImage obs = apply_mask(img, m);
  return Example{std::move(img), std::move(obs)};
}

ExampleSource LgScenario::source() const {
  return [this](int, int, Rng& rng) { return draw(rng); };
}

LgScenario make_lg_scenario(int hidden, hvae::HeadKind partial_heads) {
  Rng model_rng(11);
  LgScenario s;
  s.model = lg::LinearGaussianModel::random(2, 4, 0.7, model_rng);
  s.encoder = lg::exact_posterior_encoder(s.model);
  s.marginal = lg::observation_marginal(s.model);
  Rng head_rng(12);
  s.surrogate = lg::to_surrogate(s.model, s.encoder, partial_heads, hidden, head_rng);
  return s;
}

KlReport partial_kl_report(const LgScenario& s, const hvae::Model& trained, int observations, int samples,
                           std::uint64_t seed) {
  Rng rng(seed);
  KlReport r;
  for (int k = 0; k < observations; ++k) {
    const Example ex = s.draw(rng);
    const auto sub = lg::observed_subset(*ex.observed);
    const auto post = lg::posterior_given_subset(s.model, sub.indices, sub.values);
    double fwd = 0.0;
    double rev = 0.0;
    for (int i = 0; i < samples; ++i) {
      const Eigen::VectorXd z = post.sample(rng);
      fwd += post.logpdf(z) - hvae::partial_log_density(trained, *ex.observed, lg::to_groups(z));
      const auto h = hvae::partial_pass(trained, *ex.observed, hvae::draw_noise(trained.config, rng));
      rev += hvae::partial_log_density(trained, *ex.observed, h.z) - post.logpdf(lg::from_groups(h.z));
    }
    r.forward += fwd / samples;
    r.reverse += rev / samples;
  }
  r.forward /= observations;
  r.reverse /= observations;
  return r;
}

// ---------------------------------------------------------------------------

namespace {

constexpr double kBimodalNoise = 0.25;

double bump(double z) { return 1.0 + 0.5 * (std::tanh(2.0 * (z - 1.0)) - std::tanh(2.0 * (z + 1.0))); }

void set_entry(hvae::Model& m, const std::string& name, std::size_t r, std::size_t c, double v) {
  auto& a = m.params.at(name);
  a.mutable_data()[r * a.cols() + c] = v;
}

}  // namespace

BimodalToy make_bimodal_toy() {
  hvae::HvaeConfig c;
  c.dims = {1};
  c.hidden = 16;
  c.state = 1;
  c.feature = 1;
  c.height = 1;
  c.width = 2;
  c.features = hvae::FeatureKind::identity;
  c.likelihood = hvae::Likelihood::gaussian;
  c.noise_std = kBimodalNoise;
  Rng rng(3);
  BimodalToy toy{hvae::init_model(c, rng)};
  hvae::Model& m = toy.model;
  for (auto& [name, a] : m.params) {
    if (!hvae::is_partial_param(name)) {
      for (double& v : a.mutable_data()) v = 0.0;
    }
  }
  // h = 10 tanh(z / 10), i.e. h ~ z over the prior's range.
  set_entry(m, "upd.l1.W1", 0, 1, 0.1);
  set_entry(m, "upd.l1.W2", 0, 0, 10.0);
  // x1 = 1 + (tanh(2h - 2) - tanh(2h + 2)) / 2, x2 = 10 tanh(h / 10).
  set_entry(m, "dec.W1", 0, 0, 2.0);
  set_entry(m, "dec.b1", 0, 0, -2.0);
  set_entry(m, "dec.W1", 1, 0, 2.0);
  set_entry(m, "dec.b1", 1, 0, 2.0);
  set_entry(m, "dec.W1", 2, 0, 0.1);
  set_entry(m, "dec.W2", 0, 0, 0.5);
  set_entry(m, "dec.W2", 0, 1, -0.5);
  set_entry(m, "dec.b2", 0, 0, 1.0);
  set_entry(m, "dec.W2", 1, 2, 10.0);
  // Encoder: the exact posterior given x2 alone, N(k x2, k noise^2).
  const double s2 = kBimodalNoise * kBimodalNoise;
  const double k = 1.0 / (1.0 + s2);
  set_entry(m, "enc.l1.W1", 0, 2, 0.1 * k);
  set_entry(m, "enc.l1.W2", 0, 0, 10.0);
  set_entry(m, "enc.l1.b2", 1, 0, 0.5 * std::log(s2 / (1.0 + s2)));
  return toy;
}

ExampleSource BimodalToy::source() const {
  return [](int, int, Rng& rng) {
    const double z = rng.normal();
    ImageGrid img = ImageGrid::blank(1, 2, 1);
    img.pixels = {bump(z) + kBimodalNoise * rng.normal(), z + kBimodalNoise * rng.normal()};
    Mask m = Mask::zeros(1, 2);
    m.bits[0] = 1;
    MaskedImage obs = apply_mask(img, m);
    return Example{std::move(img), std::move(obs)};
  };
}

double BimodalToy::mean_partial_std(const hvae::Model& trained, int observations, std::uint64_t seed) const {
  Rng rng(seed);
  const ExampleSource src = source();
  double total = 0.0;
  for (int i = 0; i < observations; ++i) {
    const Example ex = src(0, i, rng);
    const auto h = hvae::partial_pass(trained, *ex.observed, hvae::zero_noise(trained.config));
    total += std::exp(h.partial[0].log_sigma[0]);
  }
  return total / observations;
}

// ---------------------------------------------------------------------------

TabularWorld TabularWorld::random(Rng& rng) {
  TabularWorld t;
  double total = 0.0;
  for (auto& row : t.joint) {
    for (double& p : row) {
      p = 0.05 + rng.uniform();
      total += p;
    }
  }
  for (auto& row : t.joint) {
    for (double& p : row) p /= total;
  }
  return t;
}

ImageGrid TabularWorld::decode(int code) {
  ImageGrid img = ImageGrid::blank(2, 2, 1);
  for (int k = 0; k < 4; ++k) img.pixels[static_cast<std::size_t>(k)] = (code >> k) & 1;
  return img;
}

boed::ScanWorld TabularWorld::world() const {
  boed::ScanWorld w;
  w.height = 2;
  w.width = 2;
  w.patch = 1;
  w.grid = 2;
  w.horizon = 4;
  w.completions = 16;
  w.validate();
  return w;
}

namespace {

bool consistent(const MaskedImage& obs, int code) {
  for (int k = 0; k < 4; ++k) {
    if (obs.mask().bits[static_cast<std::size_t>(k)] != 0 &&
        obs.observed()[static_cast<std::size_t>(k)] != static_cast<double>((code >> k) & 1)) {
      return false;
    }
  }
  return true;
}

double plogp_ratio(double pj, double pa, double pb) { return pj > 0.0 ? pj * std::log(pj / (pa * pb)) : 0.0; }

}  // namespace

std::vector<double> TabularWorld::posterior(const MaskedImage& observed) const {
  std::vector<double> p(2, 0.0);
  for (int code = 0; code < 16; ++code) {
    if (!consistent(observed, code)) continue;
    for (int v = 0; v < 2; ++v) p[static_cast<std::size_t>(v)] += joint[static_cast<std::size_t>(v)][static_cast<std::size_t>(code)];
  }
  const double z = p[0] + p[1];
  p[0] /= z;
  p[1] /= z;
  return p;
}

boed::LabelModel TabularWorld::label_model() const {
  return [this](const MaskedImage& obs) { return posterior(obs); };
}

void TabularWorld::completions(const MaskedImage& observed, std::vector<ImageGrid>& images,
                               std::vector<double>& weights) const {
  images.clear();
  weights.clear();
  double total = 0.0;
  for (int code = 0; code < 16; ++code) {
    if (!consistent(observed, code)) continue;
    const double w = joint[0][static_cast<std::size_t>(code)] + joint[1][static_cast<std::size_t>(code)];
    images.push_back(decode(code));
    weights.push_back(w);
    total += w;
  }
  for (double& w : weights) w /= total;
}

double TabularWorld::conditional_mi(const MaskedImage& observed, ScanCoord candidate) const {
  const int k = candidate.y * 2 + candidate.x;
  // p(v, x_k | observation) for x_k in {0, 1}.
  double pj[2][2] = {{0, 0}, {0, 0}};
  double total = 0.0;
  for (int code = 0; code < 16; ++code) {
    if (!consistent(observed, code)) continue;
    for (int v = 0; v < 2; ++v) {
      const double p = joint[static_cast<std::size_t>(v)][static_cast<std::size_t>(code)];
      pj[v][(code >> k) & 1] += p;
      total += p;
    }
  }
  double mi = 0.0;
  for (auto& row : pj) {
    for (double& p : row) p /= total;
  }
  const double pv[2] = {pj[0][0] + pj[0][1], pj[1][0] + pj[1][1]};
  const double px[2] = {pj[0][0] + pj[1][0], pj[0][1] + pj[1][1]};
  for (int v = 0; v < 2; ++v) {
    for (int x = 0; x < 2; ++x) mi += plogp_ratio(pj[v][x], pv[v], px[x]);
  }
  return mi;
}

// ---------------------------------------------------------------------------

ShapesPipeline build_shapes_pipeline(const PipelineBudget& budget, std::uint64_t seed) {
  RunConfig rc;
  rc.set("seed", std::to_string(seed));
  ShapesPipeline p;
  const Dataset all = generate_shapes(budget.count, rc.integer("data.side"), rc.integer("data.classes"),
                                      derive_seed(seed, "data"));
  std::tie(p.train, p.test) = split_dataset(all, rc.real("data.train_frac"));

  Rng init = Rng::stream(seed, "train.init");
  hvae::Model model = hvae::init_model(rc.hvae(p.train.height, p.train.width, p.train.channels), init);
  const double side_frac = rc.real("mask.side_frac");
  const int n_max = rc.integer("mask.n_max");

  TrainConfig vae_cfg = rc.train(Objective::uncond);
  vae_cfg.iterations = budget.vae_iterations;
  TrainResult vae = train(vae_cfg, dataset_source(p.train, Objective::uncond, side_frac, n_max, false), model);
  p.vae = vae.model;
  p.vae_log = std::move(vae.log);

  TrainConfig part_cfg = rc.train(Objective::forward);
  part_cfg.iterations = budget.partial_iterations;
  part_cfg.freeze_vae = true;
  TrainResult part =
      train(part_cfg, dataset_source(p.train, Objective::forward, side_frac, n_max, false), std::move(vae.model));
  p.aipo = std::move(part.model);
  p.partial_log = std::move(part.log);

  ClassifierConfig cc = rc.classifier();
  cc.iterations = budget.classifier_iterations;
  p.classifier = train_classifier(p.train, cc);
  return p;
}

}  // namespace aipo::testing
