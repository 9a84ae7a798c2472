// SPDX-License-Identifier: Apache-2.0
//
// Observation model: binary pixel masks and the corruption operator that
// turns an image into (image * mask, mask).
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "aipo/image.hpp"
#include "aipo/rng.hpp"

namespace aipo {

/// Per-pixel observation mask; 1 = observed.
struct Mask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> bits;

  static Mask zeros(int height, int width);
  static Mask ones(int height, int width);

  bool at(int row, int col) const { return bits[static_cast<std::size_t>(row) * width + col] != 0; }
  std::size_t observed_count() const;
  Mask complement() const;
  Mask united(const Mask& other) const;

  friend bool operator==(const Mask&, const Mask&) = default;
};

/// Corrupted image. observed is zero wherever the mask is zero and equals
/// the source pixel wherever it is one; the constructor enforces this.
class MaskedImage {
 public:
  MaskedImage(int height, int width, int channels, std::vector<double> observed, Mask mask);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int channels() const noexcept { return channels_; }
  const std::vector<double>& observed() const noexcept { return observed_; }
  const Mask& mask() const noexcept { return mask_; }

  /// Network input: observed values followed by the mask repeated per channel.
  std::vector<double> network_input() const;

  friend bool operator==(const MaskedImage&, const MaskedImage&) = default;

 private:
  int height_;
  int width_;
  int channels_;
  std::vector<double> observed_;
  Mask mask_;
};

/// Patch side used for a fraction of the shorter image side:
/// max(1, round-half-up(side_frac * min(H, W))).
int patch_side(int height, int width, double side_frac);

/// Scan coordinate: top-left corner, x = column, y = row.
struct ScanCoord {
  int x = 0;
  int y = 0;
  friend bool operator==(const ScanCoord&, const ScanCoord&) = default;
};

/// The squares behind a patch mask.
struct PatchDraw {
  int height = 0;
  int width = 0;
  int side = 0;
  std::vector<ScanCoord> corners;

  Mask mask() const;
};

/// n ~ Uniform{0..n_max} squares of side patch_side(), each fully inside.
PatchDraw draw_patches(int height, int width, double side_frac, int n_max, Rng& rng);
/// Exactly n squares.
PatchDraw draw_patches_exact(int height, int width, double side_frac, int n, Rng& rng);

/// Union of n ~ Uniform{0..n_max} squares, each fully inside the frame.
Mask sample_patch_mask(int height, int width, double side_frac, int n_max, Rng& rng);
/// Same draws as sample_patch_mask, complemented.
Mask sample_holes_mask(int height, int width, double side_frac, int n_max, Rng& rng);
/// Union of exactly n squares.
Mask sample_patch_mask_exact(int height, int width, double side_frac, int n, Rng& rng);

MaskedImage apply_mask(const ImageGrid& image, const Mask& mask);

Mask mask_from_scans(std::span<const ScanCoord> coords, int patch, int height, int width);

/// Free-form mask from an 8-bit PGM; gray > 127 means observed.
Mask read_mask_pgm(const std::filesystem::path& path);

/// Overwrite the observed pixels of a completion with the observation.
ImageGrid paste_observed(const ImageGrid& completion, const MaskedImage& observation);

}  // namespace aipo
