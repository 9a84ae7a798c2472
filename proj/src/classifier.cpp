// SPDX-License-Identifier: Apache-2.0
#include "aipo/classifier.hpp"

#include <algorithm>
#include <cmath>

#include "aipo/error.hpp"
#include "aipo/kernels.hpp"
#include "aipo/tape.hpp"
#include "aipo/train.hpp"

namespace aipo {
namespace {

const NumArray& get(const Classifier& g, const char* name) {
  auto it = g.params.find(name);
  if (it == g.params.end()) throw config_error("missing_param", std::string("classifier lacks ") + name);
  return it->second;
}

void check_extents(const Classifier& g, const MaskedImage& x) {
  if (x.height() != g.height || x.width() != g.width || x.channels() != g.channels) {
    throw numeric_error("shape_mismatch", "observation extents differ from classifier input");
  }
}

}  // namespace

void ClassifierConfig::validate() const {
  if (hidden < 1 || iterations < 0 || batch < 1 || !(lr > 0.0) || scan_patch < 1 || max_patches < 0 ||
      full_share < 0.0 || full_share > 1.0) {
    throw config_error("bad_classifier", "invalid classifier configuration");
  }
}

void classify_with_features(const Classifier& g, const MaskedImage& observed,
                            std::vector<double>* posterior, std::vector<double>* features) {
  check_extents(g, observed);
  const std::vector<double> in = observed.network_input();
  const NumArray& W1 = get(g, "cls.W1");
  const NumArray& b1 = get(g, "cls.b1");
  std::vector<double> h(static_cast<std::size_t>(g.hidden));
  kernels::matvec(W1.data(), W1.rows(), W1.cols(), in, h);
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = std::tanh(h[i] + b1[i]);
  if (posterior != nullptr) {
    const NumArray& W2 = get(g, "cls.W2");
    const NumArray& b2 = get(g, "cls.b2");
    std::vector<double> logits(static_cast<std::size_t>(g.classes));
    kernels::matvec(W2.data(), W2.rows(), W2.cols(), h, logits);
    double mx = -INFINITY;
    for (std::size_t k = 0; k < logits.size(); ++k) mx = std::max(mx, logits[k] += b2[k]);
    double z = 0.0;
    for (double& l : logits) z += (l = std::exp(l - mx));
    for (double& l : logits) l /= z;
    *posterior = std::move(logits);
  }
  if (features != nullptr) *features = std::move(h);
}

std::vector<double> classify(const Classifier& g, const MaskedImage& observed) {
  std::vector<double> p;
  classify_with_features(g, observed, &p, nullptr);
  return p;
}

std::vector<double> classifier_features(const Classifier& g, const MaskedImage& observed) {
  std::vector<double> f;
  classify_with_features(g, observed, nullptr, &f);
  return f;
}

Classifier init_classifier(int height, int width, int channels, int classes, int hidden, Rng& rng) {
  if (classes < 2) throw config_error("bad_classes", "classifier needs at least two classes");
  Classifier g{height, width, channels, classes, hidden, {}};
  const auto in = static_cast<std::size_t>(2 * height * width * channels);
  const auto h = static_cast<std::size_t>(hidden), k = static_cast<std::size_t>(classes);
  g.params.emplace("cls.W1", init_weight(h, in, rng));
  g.params.emplace("cls.b1", NumArray::zeros({h}));
  g.params.emplace("cls.W2", init_weight(k, h, rng));
  g.params.emplace("cls.b2", NumArray::zeros({k}));
  return g;
}

Classifier train_classifier(const Dataset& data, const ClassifierConfig& config) {
  config.validate();
  if (data.classes < 2) throw config_error("bad_classes", "classifier needs at least two classes");
  if (data.images.empty()) throw config_error("empty_dataset", "classifier training set is empty");
  Rng init = Rng::stream(config.seed, "classifier.init");
  Classifier g = init_classifier(data.height, data.width, data.channels, data.classes, config.hidden, init);
  const double side_frac = static_cast<double>(config.scan_patch) / std::min(data.height, data.width);
  AdamState state;
  const AdamConfig adam{config.lr, 0.9, 0.999, 1e-8};
  for (int it = 0; it < config.iterations; ++it) {
    GradMap total;
    const double scale = -1.0 / config.batch;
    for (int b = 0; b < config.batch; ++b) {
      Rng rng = Rng::stream(derive_seed(config.seed, "classifier.iteration", static_cast<std::uint64_t>(it)),
                            "example", static_cast<std::uint64_t>(b));
      const ImageGrid& img = data.images[rng.below(data.images.size())];
      const Mask m = rng.uniform() < config.full_share
                         ? Mask::ones(data.height, data.width)
                         : sample_patch_mask(data.height, data.width, side_frac, config.max_patches, rng);
      const MaskedImage x = apply_mask(img, m);
      Tape tape(true);
      auto p = [&](const char* n) { return tape.param(n, g.params.at(n)); };
      Var h = tanh(add(matvec(p("cls.W1"), tape.constant(x.network_input())), p("cls.b1")));
      Var lp = log_softmax(add(matvec(p("cls.W2"), h), p("cls.b2")));
      Var ll = slice(lp, static_cast<std::size_t>(img.label), 1);
      for (const auto& [name, grad] : tape.backward(sum(ll))) {
        auto t = total.try_emplace(name, NumArray::zeros(grad.shape())).first;
        kernels::axpy(scale, grad.data(), t->second.mutable_data());
      }
    }
    adam_step(g.params, total, state, adam);
  }
  return g;
}

double classifier_accuracy(const Classifier& g, const Dataset& data, const Mask& mask) {
  if (data.images.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& img : data.images) {
    const auto p = classify(g, apply_mask(img, mask));
    const auto best = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
    hits += best == img.label ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(data.images.size());
}

ParamStore classifier_to_checkpoint(const Classifier& g) {
  ParamStore out = g.params;
  out.insert_or_assign("meta.classifier",
                       NumArray::vector({1.0, static_cast<double>(g.height), static_cast<double>(g.width),
                                         static_cast<double>(g.channels), static_cast<double>(g.classes),
                                         static_cast<double>(g.hidden)}));
  return out;
}

Classifier classifier_from_checkpoint(const ParamStore& store) {
  auto it = store.find("meta.classifier");
  if (it == store.end() || it->second.size() != 6 || it->second[0] != 1.0) {
    throw config_error("not_a_classifier", "checkpoint has no valid meta.classifier entry");
  }
  const auto& m = it->second;
  Classifier g{static_cast<int>(m[1]), static_cast<int>(m[2]), static_cast<int>(m[3]),
               static_cast<int>(m[4]), static_cast<int>(m[5]), {}};
  for (const char* n : {"cls.W1", "cls.b1", "cls.W2", "cls.b2"}) {
    auto p = store.find(n);
    if (p == store.end()) throw config_error("not_a_classifier", std::string("checkpoint lacks ") + n);
    g.params.emplace(n, p->second);
  }
  const auto in = static_cast<std::size_t>(2 * g.height * g.width * g.channels);
  if (g.params.at("cls.W1").shape() != NumArray::Shape{static_cast<std::size_t>(g.hidden), in} ||
      g.params.at("cls.W2").shape() !=
          NumArray::Shape{static_cast<std::size_t>(g.classes), static_cast<std::size_t>(g.hidden)}) {
    throw config_error("not_a_classifier", "classifier weights do not match meta.classifier");
  }
  return g;
}

}  // namespace aipo
