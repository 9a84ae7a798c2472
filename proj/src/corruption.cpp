// SPDX-License-Identifier: Apache-2.0
#include "aipo/corruption.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "aipo/error.hpp"
#include "aipo/fileio.hpp"

namespace aipo {
namespace {

void add_square(Mask& m, int top, int left, int side) {
  for (int r = top; r < top + side; ++r) {
    for (int c = left; c < left + side; ++c) m.bits[static_cast<std::size_t>(r) * m.width + c] = 1;
  }
}

void check_frac(double side_frac, int n_max) {
  if (!(side_frac > 0.0 && side_frac < 1.0)) {
    throw config_error("bad_side_frac", "patch side fraction must lie in (0, 1)");
  }
  if (n_max < 0) throw config_error("bad_patch_count", "patch count must be non-negative");
}

}  // namespace

Mask Mask::zeros(int height, int width) {
  return Mask{height, width, std::vector<std::uint8_t>(static_cast<std::size_t>(height) * width, 0)};
}

Mask Mask::ones(int height, int width) {
  return Mask{height, width, std::vector<std::uint8_t>(static_cast<std::size_t>(height) * width, 1)};
}

std::size_t Mask::observed_count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

Mask Mask::complement() const {
  Mask m = *this;
  for (auto& b : m.bits) b = b ? 0 : 1;
  return m;
}

Mask Mask::united(const Mask& other) const {
  if (other.height != height || other.width != width) {
    throw numeric_error("shape_mismatch", "mask union of differently sized masks");
  }
  Mask m = *this;
  for (std::size_t i = 0; i < bits.size(); ++i) m.bits[i] = (bits[i] || other.bits[i]) ? 1 : 0;
  return m;
}

MaskedImage::MaskedImage(int height, int width, int channels, std::vector<double> observed, Mask mask)
    : height_(height), width_(width), channels_(channels), observed_(std::move(observed)),
      mask_(std::move(mask)) {
  if (mask_.height != height_ || mask_.width != width_ ||
      mask_.bits.size() != static_cast<std::size_t>(height_) * width_) {
    throw numeric_error("shape_mismatch", "mask extents differ from image extents");
  }
  if (observed_.size() != mask_.bits.size() * static_cast<std::size_t>(channels_)) {
    throw numeric_error("shape_mismatch", "observed values do not match H*W*C");
  }
  for (std::size_t p = 0; p < mask_.bits.size(); ++p) {
    if (mask_.bits[p] > 1) throw numeric_error("bad_mask", "mask entries must be 0 or 1");
    if (mask_.bits[p]) continue;
    for (int c = 0; c < channels_; ++c) {
      if (observed_[p * channels_ + c] != 0.0) {
        throw numeric_error("unobserved_value",
                            "observed value stored under mask 0 at pixel " + std::to_string(p));
      }
    }
  }
}

std::vector<double> MaskedImage::network_input() const {
  std::vector<double> in = observed_;
  in.reserve(observed_.size() * 2);
  for (std::uint8_t b : mask_.bits) {
    for (int c = 0; c < channels_; ++c) in.push_back(b ? 1.0 : 0.0);
  }
  return in;
}

int patch_side(int height, int width, double side_frac) {
  const double raw = side_frac * std::min(height, width);
  return std::max(1, static_cast<int>(std::floor(raw + 0.5)));
}

Mask PatchDraw::mask() const {
  Mask m = Mask::zeros(height, width);
  for (const auto& c : corners) add_square(m, c.y, c.x, side);
  return m;
}

PatchDraw draw_patches_exact(int height, int width, double side_frac, int n, Rng& rng) {
  check_frac(side_frac, n);
  PatchDraw d{height, width, patch_side(height, width, side_frac), {}};
  for (int i = 0; i < n; ++i) {
    const int top = static_cast<int>(rng.below(static_cast<std::uint64_t>(height - d.side + 1)));
    const int left = static_cast<int>(rng.below(static_cast<std::uint64_t>(width - d.side + 1)));
    d.corners.push_back({left, top});
  }
  return d;
}

PatchDraw draw_patches(int height, int width, double side_frac, int n_max, Rng& rng) {
  check_frac(side_frac, n_max);
  const int n = static_cast<int>(rng.below(static_cast<std::uint64_t>(n_max) + 1));
  return draw_patches_exact(height, width, side_frac, n, rng);
}

Mask sample_patch_mask_exact(int height, int width, double side_frac, int n, Rng& rng) {
  return draw_patches_exact(height, width, side_frac, n, rng).mask();
}

Mask sample_patch_mask(int height, int width, double side_frac, int n_max, Rng& rng) {
  return draw_patches(height, width, side_frac, n_max, rng).mask();
}

Mask sample_holes_mask(int height, int width, double side_frac, int n_max, Rng& rng) {
  return sample_patch_mask(height, width, side_frac, n_max, rng).complement();
}

MaskedImage apply_mask(const ImageGrid& image, const Mask& mask) {
  if (image.height != mask.height || image.width != mask.width) {
    throw numeric_error("shape_mismatch", "image " + std::to_string(image.height) + "x" +
                                              std::to_string(image.width) + " vs mask " +
                                              std::to_string(mask.height) + "x" +
                                              std::to_string(mask.width));
  }
  std::vector<double> observed(image.pixels.size(), 0.0);
  for (std::size_t p = 0; p < mask.bits.size(); ++p) {
    if (!mask.bits[p]) continue;
    for (int c = 0; c < image.channels; ++c) {
      observed[p * image.channels + c] = image.pixels[p * image.channels + c];
    }
  }
  return MaskedImage(image.height, image.width, image.channels, std::move(observed), mask);
}

Mask mask_from_scans(std::span<const ScanCoord> coords, int patch, int height, int width) {
  if (patch < 1 || patch > height || patch > width) {
    throw config_error("bad_patch", "scan patch " + std::to_string(patch) + " does not fit the image");
  }
  Mask m = Mask::zeros(height, width);
  for (const ScanCoord& c : coords) {
    if (c.x < 0 || c.y < 0 || c.x + patch > width || c.y + patch > height) {
      throw config_error("bad_coordinate", "scan at (" + std::to_string(c.x) + "," +
                                               std::to_string(c.y) + ") leaves the image");
    }
    add_square(m, c.y, c.x, patch);
  }
  return m;
}

Mask read_mask_pgm(const std::filesystem::path& path) {
  const GrayImage g = read_pgm(path);
  Mask m = Mask::zeros(g.height, g.width);
  for (std::size_t i = 0; i < g.pixels.size(); ++i) m.bits[i] = g.pixels[i] > 127 ? 1 : 0;
  return m;
}

ImageGrid paste_observed(const ImageGrid& completion, const MaskedImage& observation) {
  if (completion.height != observation.height() || completion.width != observation.width() ||
      completion.channels != observation.channels()) {
    throw numeric_error("shape_mismatch", "completion and observation extents differ");
  }
  ImageGrid out = completion;
  const auto& bits = observation.mask().bits;
  for (std::size_t p = 0; p < bits.size(); ++p) {
    if (!bits[p]) continue;
    for (int c = 0; c < out.channels; ++c) {
      out.pixels[p * out.channels + c] = observation.observed()[p * out.channels + c];
    }
  }
  return out;
}

}  // namespace aipo
