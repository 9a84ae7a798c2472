// SPDX-License-Identifier: Apache-2.0
#include "aipo/image.hpp"

#include <algorithm>
#include <cmath>

#include "aipo/error.hpp"
#include "aipo/rng.hpp"

namespace aipo {
namespace {

int uniform_int(Rng& rng, int lo, int hi) {  // inclusive
  return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
}

void fill_box(ImageGrid& img, int top, int left, int h, int w) {
  for (int r = top; r < top + h; ++r) {
    for (int c = left; c < left + w; ++c) {
      if (r >= 0 && r < img.height && c >= 0 && c < img.width) img.at(r, c) = 1.0;
    }
  }
}

void draw_shape(ImageGrid& img, ShapeFamily family, Rng& rng) {
  const int s = img.height;
  switch (family) {
    case ShapeFamily::filled_rect: {
      const int h = uniform_int(rng, s / 4, s / 2);
      const int w = uniform_int(rng, s / 4, s / 2);
      fill_box(img, uniform_int(rng, 0, s - h), uniform_int(rng, 0, s - w), h, w);
      break;
    }
    case ShapeFamily::hollow_rect: {
      const int h = uniform_int(rng, std::max(4, s / 4 + 1), s / 2 + 1);
      const int w = uniform_int(rng, std::max(4, s / 4 + 1), s / 2 + 1);
      const int top = uniform_int(rng, 0, s - h);
      const int left = uniform_int(rng, 0, s - w);
      fill_box(img, top, left, 1, w);
      fill_box(img, top + h - 1, left, 1, w);
      fill_box(img, top, left, h, 1);
      fill_box(img, top, left + w - 1, h, 1);
      break;
    }
    case ShapeFamily::plus_sign: {
      const int arm = uniform_int(rng, std::max(2, s / 6), s / 4);
      const int cy = uniform_int(rng, arm, s - 1 - arm);
      const int cx = uniform_int(rng, arm, s - 1 - arm);
      fill_box(img, cy, cx - arm, 1, 2 * arm + 1);
      fill_box(img, cy - arm, cx, 2 * arm + 1, 1);
      break;
    }
    case ShapeFamily::diagonal_stripe: {
      const int len = uniform_int(rng, s / 2, (3 * s) / 4);
      const int top = uniform_int(rng, 0, s - len);
      const int left = uniform_int(rng, 0, s - len - 1);
      for (int i = 0; i < len; ++i) fill_box(img, top + i, left + i, 1, 2);
      break;
    }
    case ShapeFamily::disc: {
      const double radius = s / 6.0 + rng.uniform() * (s / 4.0 - s / 6.0);
      const int margin = static_cast<int>(std::ceil(radius));
      const int cy = uniform_int(rng, margin, s - 1 - margin);
      const int cx = uniform_int(rng, margin, s - 1 - margin);
      for (int r = 0; r < s; ++r) {
        for (int c = 0; c < s; ++c) {
          const double dy = r - cy, dx = c - cx;
          if (dy * dy + dx * dx <= radius * radius) img.at(r, c) = 1.0;
        }
      }
      break;
    }
    case ShapeFamily::two_dot: {
      const int y0 = uniform_int(rng, 0, s - 2), x0 = uniform_int(rng, 0, s - 2);
      int y1 = 0, x1 = 0;
      do {
        y1 = uniform_int(rng, 0, s - 2);
        x1 = uniform_int(rng, 0, s - 2);
      } while (std::max(std::abs(y1 - y0), std::abs(x1 - x0)) < 4);
      fill_box(img, y0, x0, 2, 2);
      fill_box(img, y1, x1, 2, 2);
      break;
    }
  }
}

}  // namespace

bool ImageGrid::is_binary() const noexcept {
  return std::all_of(pixels.begin(), pixels.end(), [](double v) { return v == 0.0 || v == 1.0; });
}

ImageGrid ImageGrid::blank(int height, int width, int channels, int label) {
  ImageGrid g;
  g.height = height;
  g.width = width;
  g.channels = channels;
  g.label = label;
  g.pixels.assign(static_cast<std::size_t>(height) * width * channels, 0.0);
  return g;
}

std::vector<int> Dataset::class_histogram() const {
  std::vector<int> h(static_cast<std::size_t>(std::max(classes, 0)), 0);
  for (const auto& img : images) {
    if (img.label >= 0 && img.label < classes) ++h[static_cast<std::size_t>(img.label)];
  }
  return h;
}

std::string shape_family_name(int label) {
  static const char* names[] = {"filled_rect", "hollow_rect", "plus_sign",
                                "diagonal_stripe", "disc", "two_dot"};
  return (label >= 0 && label < 6) ? names[label] : "unknown";
}

Dataset generate_shapes(int count, int side, int classes, std::uint64_t seed) {
  if (count < 0) throw config_error("bad_count", "image count must be non-negative");
  if (side < 8) {
    throw config_error("side_too_small", "side " + std::to_string(side) +
                                             " < 8 makes shape families indistinguishable");
  }
  if (classes < 2 || classes > 6) {
    throw config_error("bad_classes", "class count must be in [2, 6], got " + std::to_string(classes));
  }
  Dataset d;
  d.height = side;
  d.width = side;
  d.channels = 1;
  d.classes = classes;

  std::vector<int> labels(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) labels[static_cast<std::size_t>(i)] = i % classes;
  Rng order = Rng::stream(seed, "shapes.order");
  for (std::size_t i = labels.size(); i > 1; --i) {
    std::swap(labels[i - 1], labels[order.below(i)]);
  }

  d.images.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    Rng rng = Rng::stream(seed, "shapes.image", i);
    ImageGrid img = ImageGrid::blank(side, side, 1, labels[i]);
    draw_shape(img, static_cast<ShapeFamily>(labels[i]), rng);
    d.images.push_back(std::move(img));
  }
  return d;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& d, double train_frac) {
  if (!(train_frac > 0.0 && train_frac < 1.0)) {
    throw config_error("bad_split", "train fraction must lie in (0, 1)");
  }
  Dataset train = d, test = d;
  train.images.clear();
  test.images.clear();
  train.split = Split::train;
  test.split = Split::test;
  const auto hist = d.class_histogram();
  std::vector<int> quota(hist.size()), seen(hist.size(), 0);
  for (std::size_t k = 0; k < hist.size(); ++k) {
    int q = static_cast<int>(std::ceil(train_frac * hist[k]));
    if (hist[k] >= 2) q = std::clamp(q, 1, hist[k] - 1);
    quota[k] = q;
  }
  for (const auto& img : d.images) {
    auto k = static_cast<std::size_t>(img.label);
    (seen[k]++ < quota[k] ? train : test).images.push_back(img);
  }
  return {std::move(train), std::move(test)};
}

}  // namespace aipo
