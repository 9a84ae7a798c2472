// SPDX-License-Identifier: Apache-2.0
//
// Binary file formats. All integers are little-endian; every file ends with
// a CRC-32 (zlib polynomial) of all preceding bytes.
//
//   Dataset    "AIPD" u8 version=1, u32 H, W, C, K, N,
//              N x (u8 label, H*W*C bytes each 0 or 1), u32 crc
//   Checkpoint "AIPC" u8 version=1, u32 count,
//              count x (u32 name_len, name, u32 rank, rank x u32 dim,
//                       f64 payload), u32 crc
//
// PGM images are 8-bit binary "P5".
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "aipo/image.hpp"
#include "aipo/params.hpp"

namespace aipo {

using Bytes = std::vector<std::uint8_t>;

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

Bytes encode_dataset(const Dataset& d);
Dataset decode_dataset(std::span<const std::uint8_t> bytes);
void write_dataset(const Dataset& d, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);

inline constexpr std::uint8_t kCheckpointVersion = 1;

Bytes encode_checkpoint(const ParamStore& params);
ParamStore decode_checkpoint(std::span<const std::uint8_t> bytes);
void write_checkpoint(const ParamStore& params, const std::filesystem::path& path);
ParamStore read_checkpoint(const std::filesystem::path& path);

struct GrayImage {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;
};

Bytes encode_pgm(const GrayImage& img);
GrayImage decode_pgm(std::span<const std::uint8_t> bytes);
void write_pgm(const GrayImage& img, const std::filesystem::path& path);
GrayImage read_pgm(const std::filesystem::path& path);

/// Single-channel image in [0,1] to 8-bit gray (value * 255, rounded).
GrayImage to_gray(const ImageGrid& img);
/// Gray values scaled to [0,1].
ImageGrid from_gray(const GrayImage& gray);

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace aipo
