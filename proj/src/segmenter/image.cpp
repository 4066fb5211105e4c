#include "medfocus/segmenter/image.hpp"

#include <algorithm>
#include <cctype>
#include <string>

#include "medfocus/error.hpp"
#include "medfocus/numerics/archive.hpp"

namespace medfocus {

Image::Image(std::size_t w, std::size_t h, std::size_t c, std::uint8_t fill)
    : width(w), height(h), channels(c), pixels(w * h * c, fill) {}

Mask::Mask(std::size_t w, std::size_t h, std::uint8_t fill) : width(w), height(h), bits(w * h, fill) {}

std::size_t Mask::count() const { return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), 1)); }

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::size_t number(const char* field) {
    skip_space_and_comments();
    std::size_t value = 0;
    std::size_t digits = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > (std::size_t{1} << 31)) throw Error(ErrorKind::MalformedHeader, std::string(field) + " too large");
      ++pos_;
      ++digits;
    }
    if (digits == 0) throw Error(ErrorKind::MalformedHeader, std::string("expected ") + field);
    return value;
  }

  /// Exactly one whitespace byte separates maxval from the raster.
  void end_of_header() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
      throw Error(ErrorKind::MalformedHeader, "missing whitespace after maxval");
    }
    ++pos_;
  }

  std::size_t pos() const { return pos_; }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 2;
};

}  // namespace

Image decode_pnm(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw Error(ErrorKind::MalformedHeader, "not a binary PGM/PPM (expected P5 or P6)");
  }
  const std::size_t channels = bytes[1] == '5' ? 1 : 3;
  HeaderReader header(bytes);
  const std::size_t width = header.number("width");
  const std::size_t height = header.number("height");
  const std::size_t maxval = header.number("maxval");
  if (width == 0 || height == 0) throw Error(ErrorKind::MalformedHeader, "zero image extent");
  if (maxval != 255) throw Error(ErrorKind::UnsupportedMaxval, "maxval " + std::to_string(maxval) + " (only 255)");
  header.end_of_header();

  Image image(width, height, channels);
  const std::size_t need = image.pixels.size();
  if (bytes.size() - header.pos() < need) {
    throw Error(ErrorKind::TruncatedPayload, "expected " + std::to_string(need) + " raster bytes, found " +
                                                 std::to_string(bytes.size() - header.pos()));
  }
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(header.pos()), need, image.pixels.begin());
  return image;
}

std::vector<std::uint8_t> encode_pnm(const Image& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw Error(ErrorKind::DimensionMismatch, "images must have 1 or 3 channels");
  }
  const std::string header = std::string(image.channels == 1 ? "P5" : "P6") + "\n" + std::to_string(image.width) +
                             " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

Image read_image(const std::filesystem::path& path) { return decode_pnm(read_file_bytes(path)); }

void write_image(const std::filesystem::path& path, const Image& image) { write_file_bytes(path, encode_pnm(image)); }

void write_mask(const std::filesystem::path& path, const Mask& mask) {
  Image out(mask.width, mask.height, 1);
  for (std::size_t i = 0; i < mask.bits.size(); ++i) out.pixels[i] = mask.bits[i] ? 255 : 0;
  write_image(path, out);
}

Mask load_external_mask(const std::filesystem::path& path, std::size_t width, std::size_t height) {
  const auto bytes = read_file_bytes(path);
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
    throw Error(ErrorKind::MalformedHeader, path.string() + " is not a P5 mask");
  }
  const Image raw = decode_pnm(bytes);
  if (raw.width != width || raw.height != height) {
    throw Error(ErrorKind::DimensionMismatch, path.string() + " is " + std::to_string(raw.width) + "x" +
                                                  std::to_string(raw.height) + ", expected " + std::to_string(width) +
                                                  "x" + std::to_string(height));
  }
  Mask mask(width, height);
  for (std::size_t i = 0; i < raw.pixels.size(); ++i) mask.bits[i] = raw.pixels[i] >= 128 ? 1 : 0;
  return mask;
}

Image apply_mask(const Image& image, const Mask& mask) {
  if (image.width != mask.width || image.height != mask.height) {
    throw Error(ErrorKind::DimensionMismatch, "mask does not match image dimensions");
  }
  Image out = image;
  for (std::size_t i = 0; i < mask.bits.size(); ++i) {
    if (mask.bits[i]) continue;
    for (std::size_t c = 0; c < image.channels; ++c) out.pixels[i * image.channels + c] = 0;
  }
  return out;
}

double iou(const Mask& a, const Mask& b) {
  if (a.width != b.width || a.height != b.height) {
    throw Error(ErrorKind::DimensionMismatch, "iou: masks differ in size");
  }
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) {
    inter += (a.bits[i] & b.bits[i]);
    uni += (a.bits[i] | b.bits[i]);
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

Image to_gray(const Image& image) {
  if (image.channels == 1) return image;
  Image out(image.width, image.height, 1);
  for (std::size_t i = 0; i < image.width * image.height; ++i) {
    const unsigned r = image.pixels[3 * i], g = image.pixels[3 * i + 1], b = image.pixels[3 * i + 2];
    out.pixels[i] = static_cast<std::uint8_t>((299 * r + 587 * g + 114 * b + 500) / 1000);
  }
  return out;
}

}  // namespace medfocus
