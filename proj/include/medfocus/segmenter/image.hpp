#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace medfocus {

/// 8-bit raster, row-major, channels interleaved. channels is 1 or 3.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(std::size_t w, std::size_t h, std::size_t c, std::uint8_t fill = 0);

  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c = 0) { return pixels[(y * width + x) * channels + c]; }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c = 0) const {
    return pixels[(y * width + x) * channels + c];
  }

  friend bool operator==(const Image&, const Image&) = default;
};

/// Binary per-pixel mask; every value is 0 or 1.
struct Mask {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> bits;

  Mask() = default;
  Mask(std::size_t w, std::size_t h, std::uint8_t fill = 0);

  std::uint8_t& at(std::size_t x, std::size_t y) { return bits[y * width + x]; }
  std::uint8_t at(std::size_t x, std::size_t y) const { return bits[y * width + x]; }
  std::size_t count() const;

  friend bool operator==(const Mask&, const Mask&) = default;
};

/// Binary PGM (P5) for one channel, PPM (P6) for three; maxval must be 255.
Image read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const Image& image);
Image decode_pnm(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_pnm(const Image& image);

/// Masks are stored as P5 with values {0, 255}.
void write_mask(const std::filesystem::path& path, const Mask& mask);

/// Reads a P5 mask produced by any external tool: pixels >= 128 become 1.
/// Throws DimensionMismatch when the file is not width x height.
Mask load_external_mask(const std::filesystem::path& path, std::size_t width, std::size_t height);

/// x * m per pixel; masked-out pixels become 0 in every channel.
Image apply_mask(const Image& image, const Mask& mask);

/// |a and b| / |a or b|; two empty masks score 1.
double iou(const Mask& a, const Mask& b);

/// Rec. 601 integer luminance, (299 R + 587 G + 114 B + 500) / 1000.
Image to_gray(const Image& image);

}  // namespace medfocus
