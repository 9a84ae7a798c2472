// SPDX-License-Identifier: Apache-2.0
#include "aipo/fileio.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <string>

#include "aipo/error.hpp"

namespace aipo {
namespace {

constexpr std::uint8_t kDatasetVersion = 1;
constexpr std::uint64_t kMaxPayload = std::uint64_t{1} << 34;

class Writer {
 public:
  void bytes(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
  void tag(const char* t) { bytes({reinterpret_cast<const std::uint8_t*>(t), 4}); }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
  Bytes finish() {
    u32(crc32(out_));
    return std::move(out_);
  }

 private:
  Bytes out_;
};

class Reader {
 public:
  Reader(std::span<const std::uint8_t> b, const char* what) : b_(b), what_(what) {}

  void need(std::uint64_t n) const {
    if (n > b_.size() - pos_) {
      throw io_error("truncated", std::string(what_) + " ends at byte " + std::to_string(b_.size()) +
                                      ", needed " + std::to_string(pos_ + n));
    }
  }
  std::uint8_t u8() {
    need(1);
    return b_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(v);
  }
  std::span<const std::uint8_t> take(std::uint64_t n) {
    need(n);
    auto s = b_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  void magic(const char* tag) {
    const std::size_t have = std::min<std::size_t>(4, b_.size());
    if (std::memcmp(b_.data(), tag, have) != 0) {
      throw io_error("bad_magic", std::string(what_) + " does not start with \"" + tag + "\"");
    }
    need(4);
    pos_ += 4;
  }
  /// The trailing CRC must be the final four bytes.
  void checksum() {
    const std::size_t body = pos_;
    const std::uint32_t stored = u32();
    if (pos_ != b_.size()) {
      throw io_error("trailing_bytes", std::string(what_) + " has " +
                                           std::to_string(b_.size() - pos_) + " unexpected bytes");
    }
    if (crc32(b_.first(body)) != stored) {
      throw io_error("checksum_mismatch", std::string(what_) + " CRC-32 does not match contents");
    }
  }
  std::size_t pos() const { return pos_; }
  std::size_t size() const { return b_.size(); }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
  const char* what_;
};

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > 0xffffffffULL) throw io_error("extent_overflow", std::string(what) + " exceeds u32");
  return static_cast<std::uint32_t>(v);
}

}  // namespace

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong c = ::crc32(0L, Z_NULL, 0);
  std::size_t off = 0;
  while (off < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - off, 1u << 30));
    c = ::crc32(c, bytes.data() + off, chunk);
    off += chunk;
  }
  return static_cast<std::uint32_t>(c);
}

Bytes encode_dataset(const Dataset& d) {
  if (d.height <= 0 || d.width <= 0 || d.channels <= 0 || d.classes <= 0) {
    throw io_error("bad_header", "dataset extents must be positive");
  }
  Writer w;
  w.tag("AIPD");
  w.u8(kDatasetVersion);
  w.u32(checked_u32(static_cast<std::size_t>(d.height), "height"));
  w.u32(checked_u32(static_cast<std::size_t>(d.width), "width"));
  w.u32(checked_u32(static_cast<std::size_t>(d.channels), "channels"));
  w.u32(checked_u32(static_cast<std::size_t>(d.classes), "classes"));
  w.u32(checked_u32(d.images.size(), "count"));
  const std::size_t per = static_cast<std::size_t>(d.height) * d.width * d.channels;
  for (const auto& img : d.images) {
    if (img.height != d.height || img.width != d.width || img.channels != d.channels ||
        img.pixels.size() != per) {
      throw io_error("bad_image", "image extents differ from dataset header");
    }
    if (img.label < 0 || img.label >= d.classes || img.label > 255) {
      throw io_error("bad_label", "label " + std::to_string(img.label) + " out of range");
    }
    w.u8(static_cast<std::uint8_t>(img.label));
    for (double v : img.pixels) {
      if (v != 0.0 && v != 1.0) throw io_error("bad_pixel", "dataset pixels must be 0 or 1");
      w.u8(v == 1.0 ? 1 : 0);
    }
  }
  return w.finish();
}

Dataset decode_dataset(std::span<const std::uint8_t> bytes) {
  Reader r(bytes, "dataset");
  r.magic("AIPD");
  const std::uint8_t version = r.u8();
  if (version != kDatasetVersion) {
    throw io_error("unsupported_version", "dataset version " + std::to_string(version));
  }
  Dataset d;
  const std::uint64_t h = r.u32(), w = r.u32(), c = r.u32(), k = r.u32(), n = r.u32();
  if (h == 0 || w == 0 || c == 0 || k == 0) throw io_error("bad_header", "zero extent in dataset header");
  const std::uint64_t per = h * w * c;  // each factor < 2^32, product checked below
  if (h > kMaxPayload || w > kMaxPayload || c > kMaxPayload || per / h / w != c ||
      per > kMaxPayload || (per + 1) * n > kMaxPayload) {
    throw io_error("extent_overflow", "dataset extents too large");
  }
  r.need((per + 1) * n + 4);
  d.height = static_cast<int>(h);
  d.width = static_cast<int>(w);
  d.channels = static_cast<int>(c);
  d.classes = static_cast<int>(k);
  d.images.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    ImageGrid img = ImageGrid::blank(d.height, d.width, d.channels, r.u8());
    if (static_cast<std::uint64_t>(img.label) >= k) {
      throw io_error("bad_label", "label " + std::to_string(img.label) + " >= K");
    }
    const auto px = r.take(per);
    for (std::uint64_t j = 0; j < per; ++j) {
      if (px[j] > 1) throw io_error("bad_pixel", "pixel byte " + std::to_string(px[j]));
      img.pixels[j] = px[j];
    }
    d.images.push_back(std::move(img));
  }
  r.checksum();
  return d;
}

void write_dataset(const Dataset& d, const std::filesystem::path& path) {
  write_file(path, encode_dataset(d));
}

Dataset read_dataset(const std::filesystem::path& path) { return decode_dataset(read_file(path)); }

Bytes encode_checkpoint(const ParamStore& params) {
  Writer w;
  w.tag("AIPC");
  w.u8(kCheckpointVersion);
  w.u32(checked_u32(params.size(), "entry count"));
  for (const auto& [name, value] : params) {
    if (name.empty()) throw io_error("bad_name", "empty parameter name");
    w.u32(checked_u32(name.size(), "name length"));
    w.bytes({reinterpret_cast<const std::uint8_t*>(name.data()), name.size()});
    w.u32(checked_u32(value.rank(), "rank"));
    for (std::size_t e : value.shape()) w.u32(checked_u32(e, "extent"));
    for (double v : value.data()) w.f64(v);
  }
  return w.finish();
}

ParamStore decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes, "checkpoint");
  r.magic("AIPC");
  const std::uint8_t version = r.u8();
  if (version != kCheckpointVersion) {
    throw io_error("unsupported_version", "checkpoint version " + std::to_string(version));
  }
  const std::uint32_t count = r.u32();
  ParamStore out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = r.u32();
    if (len == 0) throw io_error("bad_name", "empty parameter name");
    const auto raw = r.take(len);
    std::string name(raw.begin(), raw.end());
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 8) throw io_error("bad_rank", name + ": rank " + std::to_string(rank));
    NumArray::Shape shape;
    std::uint64_t total = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      const std::uint32_t e = r.u32();
      if (e == 0) throw io_error("bad_rank", name + ": zero extent");
      total *= e;
      if (total > kMaxPayload / 8) throw io_error("extent_overflow", name + ": too many values");
      shape.push_back(e);
    }
    r.need(total * 8);
    std::vector<double> data(total);
    for (double& v : data) v = r.f64();
    if (!out.emplace(name, NumArray(std::move(shape), std::move(data))).second) {
      throw io_error("duplicate_name", "parameter " + name + " appears twice");
    }
  }
  r.checksum();
  return out;
}

void write_checkpoint(const ParamStore& params, const std::filesystem::path& path) {
  write_file(path, encode_checkpoint(params));
}

ParamStore read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

Bytes encode_pgm(const GrayImage& img) {
  const std::string header =
      "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  Bytes out(header.begin(), header.end());
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  return out;
}

GrayImage decode_pgm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&] {
    skip_space();
    if (pos >= bytes.size() || !std::isdigit(bytes[pos])) {
      throw io_error("bad_pgm", "malformed PGM header");
    }
    long v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos++] - '0');
      if (v > 1 << 20) throw io_error("bad_pgm", "PGM extent too large");
    }
    return static_cast<int>(v);
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
    throw io_error("bad_magic", "not a binary PGM (P5) file");
  }
  pos = 2;
  GrayImage img;
  img.width = number();
  img.height = number();
  const int maxval = number();
  if (img.width <= 0 || img.height <= 0 || maxval <= 0 || maxval > 255) {
    throw io_error("bad_pgm", "unsupported PGM extents or maxval");
  }
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw io_error("bad_pgm", "malformed header");
  ++pos;
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
  if (bytes.size() - pos < n) throw io_error("truncated", "PGM pixel data truncated");
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                    bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
  if (maxval != 255) {
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(std::lround(p * 255.0 / maxval));
  }
  return img;
}

void write_pgm(const GrayImage& img, const std::filesystem::path& path) {
  write_file(path, encode_pgm(img));
}

GrayImage read_pgm(const std::filesystem::path& path) { return decode_pgm(read_file(path)); }

GrayImage to_gray(const ImageGrid& img) {
  GrayImage g;
  g.height = img.height;
  g.width = img.width;
  g.pixels.resize(static_cast<std::size_t>(img.height) * img.width);
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c) {
      const double v = std::clamp(img.at(r, c), 0.0, 1.0);
      g.pixels[static_cast<std::size_t>(r) * img.width + c] =
          static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
  }
  return g;
}

ImageGrid from_gray(const GrayImage& gray) {
  ImageGrid img = ImageGrid::blank(gray.height, gray.width, 1);
  for (std::size_t i = 0; i < gray.pixels.size(); ++i) img.pixels[i] = gray.pixels[i] / 255.0;
  return img;
}

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("open_failed", "cannot open " + path.string());
  Bytes b((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return b;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("open_failed", "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw io_error("write_failed", "short write to " + path.string());
}

}  // namespace aipo
