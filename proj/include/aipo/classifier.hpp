// SPDX-License-Identifier: Apache-2.0
//
// Masked-image classifier g: a one-hidden-layer tanh perceptron on the
// network input (observed values followed by the mask) with a softmax over
// K classes. Its hidden activations double as the feature space for the
// distribution and diversity metrics.
//
// Parameters: cls.W1 [hidden, 2P], cls.b1, cls.W2 [K, hidden], cls.b2.
#pragma once

#include <cstdint>
#include <vector>

#include "aipo/corruption.hpp"
#include "aipo/image.hpp"
#include "aipo/params.hpp"

namespace aipo {

struct ClassifierConfig {
  int hidden = 64;
  int iterations = 3000;
  int batch = 32;
  double lr = 1e-3;
  int scan_patch = 4;       // training patches have this side
  int max_patches = 5;      // n ~ Uniform{0..max_patches}
  double full_share = 0.5;  // share of examples seen fully observed
  std::uint64_t seed = 0;

  void validate() const;
};

struct Classifier {
  int height = 0;
  int width = 0;
  int channels = 1;
  int classes = 0;
  int hidden = 0;
  ParamStore params;

  int features() const { return hidden; }
};

/// Class posterior g(. | observation); sums to one.
std::vector<double> classify(const Classifier& g, const MaskedImage& observed);
/// Hidden-layer activations.
std::vector<double> classifier_features(const Classifier& g, const MaskedImage& observed);
/// Both at once.
void classify_with_features(const Classifier& g, const MaskedImage& observed,
                            std::vector<double>* posterior, std::vector<double>* features);

Classifier init_classifier(int height, int width, int channels, int classes, int hidden, Rng& rng);
Classifier train_classifier(const Dataset& data, const ClassifierConfig& config);

/// Fraction of images whose argmax posterior under the given mask matches the label.
double classifier_accuracy(const Classifier& g, const Dataset& data, const Mask& mask);

ParamStore classifier_to_checkpoint(const Classifier& g);
Classifier classifier_from_checkpoint(const ParamStore& store);

}  // namespace aipo
