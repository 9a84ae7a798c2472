// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace aipo {

/// H x W x C pixel grid stored row-major with channels innermost.
struct ImageGrid {
  int height = 0;
  int width = 0;
  int channels = 1;
  std::vector<double> pixels;
  int label = 0;

  std::size_t size() const noexcept { return pixels.size(); }
  double at(int row, int col, int ch = 0) const {
    return pixels[(static_cast<std::size_t>(row) * width + col) * channels + ch];
  }
  double& at(int row, int col, int ch = 0) {
    return pixels[(static_cast<std::size_t>(row) * width + col) * channels + ch];
  }
  bool is_binary() const noexcept;

  static ImageGrid blank(int height, int width, int channels = 1, int label = 0);

  friend bool operator==(const ImageGrid&, const ImageGrid&) = default;
};

enum class Split { train, val, test };

struct Dataset {
  int height = 0;
  int width = 0;
  int channels = 1;
  int classes = 0;
  Split split = Split::train;
  std::vector<ImageGrid> images;

  std::size_t size() const noexcept { return images.size(); }
  std::vector<int> class_histogram() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Shape families in class-index order.
enum class ShapeFamily { filled_rect, hollow_rect, plus_sign, diagonal_stripe, disc, two_dot };

std::string shape_family_name(int label);

/// Deterministic labelled dataset of binary shapes on side x side grids.
/// Labels are assigned round-robin then shuffled; each image's geometry is
/// drawn from its own sub-stream of the seed.
Dataset generate_shapes(int count, int side, int classes, std::uint64_t seed);

/// Stratified split: the first ceil(train_frac * n_k) images of class k go
/// to the train split, the rest to test.
std::pair<Dataset, Dataset> split_dataset(const Dataset& d, double train_frac);

}  // namespace aipo
