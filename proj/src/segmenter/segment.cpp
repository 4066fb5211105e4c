#include "medfocus/segmenter/segment.hpp"

#include <algorithm>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "medfocus/error.hpp"

namespace medfocus {

Histogram histogram(const Image& gray) {
  const Image g = to_gray(gray);
  Histogram h{};
  for (auto v : g.pixels) ++h[v];
  return h;
}

int otsu_threshold(const Histogram& hist) {
  using boost::multiprecision::int256_t;
  std::uint64_t total = 0, weighted = 0;
  int occupied = 0;
  for (int v = 0; v < 256; ++v) {
    total += hist[v];
    weighted += hist[v] * static_cast<std::uint64_t>(v);
    occupied += hist[v] > 0;
  }
  if (occupied < 2) throw Error(ErrorKind::NoContrast, "histogram has a single occupied gray level");
  if (total >= (std::uint64_t{1} << 32)) throw Error(ErrorKind::NoContrast, "histogram total too large");

  // sigma_B^2(t) = (N*S0 - n0*S)^2 / (N^2 n0 n1); compare numerator/denominator
  // pairs by cross-multiplication so equal scores tie exactly.
  int best_t = 0;
  int256_t best_num = -1;
  int256_t best_den = 1;
  std::uint64_t n0 = 0, s0 = 0;
  for (int t = 0; t < 256; ++t) {
    n0 += hist[t];
    s0 += hist[t] * static_cast<std::uint64_t>(t);
    const std::uint64_t n1 = total - n0;
    int256_t num = 0;
    int256_t den = 1;
    if (n0 != 0 && n1 != 0) {
      const int256_t diff = int256_t(total) * s0 - int256_t(n0) * weighted;
      num = diff * diff;
      den = int256_t(n0) * n1;
    }
    if (num * best_den > best_num * den) {
      best_num = num;
      best_den = den;
      best_t = t;
    }
  }
  return best_t;
}

Mask binarize(const Image& gray, int threshold) {
  const Image g = to_gray(gray);
  Mask m(g.width, g.height);
  for (std::size_t i = 0; i < g.pixels.size(); ++i) m.bits[i] = g.pixels[i] > threshold ? 1 : 0;
  return m;
}

Mask largest_component(const Mask& mask) {
  const std::size_t w = mask.width, h = mask.height;
  std::vector<int> label(w * h, -1);
  std::vector<std::size_t> sizes;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < w * h; ++start) {
    if (!mask.bits[start] || label[start] >= 0) continue;
    const int id = static_cast<int>(sizes.size());
    std::size_t size = 0;
    label[start] = id;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      ++size;
      const std::size_t x = p % w, y = p / w;
      auto visit = [&](std::size_t q) {
        if (mask.bits[q] && label[q] < 0) {
          label[q] = id;
          stack.push_back(q);
        }
      };
      if (x > 0) visit(p - 1);
      if (x + 1 < w) visit(p + 1);
      if (y > 0) visit(p - w);
      if (y + 1 < h) visit(p + w);
    }
    sizes.push_back(size);
  }
  if (sizes.empty()) throw Error(ErrorKind::EmptyMask, "mask has no foreground");
  // components are numbered in raster order of their first pixel
  int keep = 0;
  for (std::size_t i = 1; i < sizes.size(); ++i) {
    if (sizes[i] > sizes[static_cast<std::size_t>(keep)]) keep = static_cast<int>(i);
  }
  Mask out(w, h);
  for (std::size_t i = 0; i < w * h; ++i) out.bits[i] = label[i] == keep ? 1 : 0;
  return out;
}

namespace {

// Square windows are separable: a horizontal pass then a vertical pass.
template <typename Reduce>
Mask square_filter(const Mask& mask, int radius, Reduce reduce) {
  if (radius < 0) throw Error(ErrorKind::InvalidConfig, "morphology radius must be >= 0");
  if (radius == 0) return mask;
  const auto w = static_cast<std::ptrdiff_t>(mask.width), h = static_cast<std::ptrdiff_t>(mask.height);
  Mask tmp(mask.width, mask.height), out(mask.width, mask.height);
  for (std::ptrdiff_t y = 0; y < h; ++y) {
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      std::uint8_t acc = mask.bits[y * w + x];
      for (std::ptrdiff_t k = std::max<std::ptrdiff_t>(0, x - radius); k <= std::min(w - 1, x + radius); ++k)
        acc = reduce(acc, mask.bits[y * w + k]);
      tmp.bits[y * w + x] = acc;
    }
  }
  for (std::ptrdiff_t y = 0; y < h; ++y) {
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      std::uint8_t acc = tmp.bits[y * w + x];
      for (std::ptrdiff_t k = std::max<std::ptrdiff_t>(0, y - radius); k <= std::min(h - 1, y + radius); ++k)
        acc = reduce(acc, tmp.bits[k * w + x]);
      out.bits[y * w + x] = acc;
    }
  }
  return out;
}

}  // namespace

Mask dilate(const Mask& mask, int radius) {
  return square_filter(mask, radius, [](std::uint8_t a, std::uint8_t b) { return std::max(a, b); });
}

Mask erode(const Mask& mask, int radius) {
  return square_filter(mask, radius, [](std::uint8_t a, std::uint8_t b) { return std::min(a, b); });
}

Mask morph_close(const Mask& mask, int radius) { return erode(dilate(mask, radius), radius); }

Mask segment(const Image& image, const SegmentConfig& cfg) {
  const Image gray = to_gray(image);
  const int t = otsu_threshold(histogram(gray));
  return largest_component(morph_close(binarize(gray, t), cfg.close_radius));
}

}  // namespace medfocus
