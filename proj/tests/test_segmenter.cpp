#include <algorithm>
#include <deque>
#include <vector>

#include <gtest/gtest.h>

#include "medfocus/error.hpp"
#include "medfocus/fewshot/synthetic.hpp"
#include "medfocus/numerics/archive.hpp"
#include "medfocus/numerics/rng.hpp"
#include "medfocus/segmenter/image.hpp"
#include "medfocus/segmenter/segment.hpp"
#include "test_util.hpp"

namespace medfocus {
namespace {

using test::expect_error;

std::vector<std::uint8_t> bytes_of(const std::string& header, std::vector<std::uint8_t> payload) {
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

Mask mask_from(std::size_t w, std::size_t h, const std::vector<int>& bits) {
  Mask m(w, h);
  for (std::size_t i = 0; i < bits.size(); ++i) m.bits[i] = static_cast<std::uint8_t>(bits[i]);
  return m;
}

// ---------------------------------------------------------------- PNM io

TEST(Pnm, DecodesP5Payload) {
  const Image img = decode_pnm(bytes_of("P5\n2 2\n255\n", {0x00, 0x7F, 0x80, 0xFF}));
  EXPECT_EQ(img.width, 2u);
  EXPECT_EQ(img.height, 2u);
  EXPECT_EQ(img.pixels, (std::vector<std::uint8_t>{0, 127, 128, 255}));
}

TEST(Pnm, HeaderCommentsAndP6) {
  const Image img = decode_pnm(bytes_of("P6\n# made by hand\n1 1\n255\n", {10, 20, 30}));
  EXPECT_EQ(img.channels, 3u);
  EXPECT_EQ(img.pixels, (std::vector<std::uint8_t>{10, 20, 30}));
}

TEST(Pnm, Errors) {
  expect_error(ErrorKind::UnsupportedMaxval, [] { decode_pnm(bytes_of("P6\n1 1\n65535\n", {0, 0, 0, 0, 0, 0})); });
  expect_error(ErrorKind::UnsupportedMaxval, [] { decode_pnm(bytes_of("P5\n1 1\n15\n", {0})); });
  expect_error(ErrorKind::MalformedHeader, [] { decode_pnm(bytes_of("P3\n1 1\n255\n", {0})); });
  expect_error(ErrorKind::MalformedHeader, [] { decode_pnm(bytes_of("P5\nx 1\n255\n", {0})); });
  expect_error(ErrorKind::TruncatedPayload, [] { decode_pnm(bytes_of("P5\n2 2\n255\n", {1, 2, 3})); });
}

TEST(Pnm, RoundTripIsByteExact) {
  Rng rng(3);
  for (std::size_t c : {1u, 3u}) {
    Image img(5, 4, c);
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.below(256));
    const auto dir = test::temp_dir("pnm");
    const auto path = dir / (c == 1 ? "a.pgm" : "a.ppm");
    write_image(path, img);
    const auto first = read_file_bytes(path);
    EXPECT_EQ(read_image(path), img);
    write_image(path, read_image(path));
    EXPECT_EQ(read_file_bytes(path), first);
  }
}

// ---------------------------------------------------------------- external masks

TEST(ExternalMask, ThresholdAndSize) {
  const auto dir = test::temp_dir("extmask");
  Image img(2, 1, 1);
  img.pixels = {127, 128};
  write_image(dir / "m.pgm", img);
  EXPECT_EQ(load_external_mask(dir / "m.pgm", 2, 1).bits, (std::vector<std::uint8_t>{0, 1}));

  write_image(dir / "full.pgm", Image(8, 8, 1, 255));
  EXPECT_EQ(load_external_mask(dir / "full.pgm", 8, 8).count(), 64u);

  write_image(dir / "big.pgm", Image(64, 64, 1, 255));
  expect_error(ErrorKind::DimensionMismatch, [&] { load_external_mask(dir / "big.pgm", 32, 32); });
}

TEST(ApplyMask, IdentityZeroAndCheckerboard) {
  Rng rng(5);
  Image img(6, 5, 3);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  EXPECT_EQ(apply_mask(img, Mask(6, 5, 1)), img);
  for (auto p : apply_mask(img, Mask(6, 5, 0)).pixels) EXPECT_EQ(p, 0);

  const Image flat(7, 7, 1, 200);
  Mask checker(7, 7);
  for (std::size_t y = 0; y < 7; ++y)
    for (std::size_t x = 0; x < 7; ++x) checker.at(x, y) = (x + y) % 2;
  const Image out = apply_mask(flat, checker);
  for (std::size_t y = 0; y < 7; ++y)
    for (std::size_t x = 0; x < 7; ++x) EXPECT_EQ(out.at(x, y), (x + y) % 2 ? 200 : 0);
}

TEST(Iou, Cases) {
  Mask a(4, 4), b(4, 4);
  EXPECT_EQ(iou(a, b), 1.0);
  a.at(0, 0) = 1;
  EXPECT_EQ(iou(a, a), 1.0);
  b.at(3, 3) = 1;
  EXPECT_EQ(iou(a, b), 0.0);
  // Two 2x2 squares overlapping in one column: |and| = 2, |or| = 6.
  Mask s(4, 2), t(4, 2);
  for (std::size_t y = 0; y < 2; ++y) {
    s.at(0, y) = s.at(1, y) = 1;
    t.at(1, y) = t.at(2, y) = 1;
  }
  EXPECT_DOUBLE_EQ(iou(s, t), 1.0 / 3.0);
}

// ---------------------------------------------------------------- Otsu

// Between-class variance up to the positive factor 1/N^2, as an exact fraction
// (S*n0 - s0*N)^2 / (n0*n1). Small histograms keep everything inside int128.
struct Fraction {
  __int128 num, den;
};

int brute_force_otsu(const Histogram& h) {
  __int128 n = 0, s = 0;
  for (int v = 0; v < 256; ++v) {
    n += h[v];
    s += static_cast<__int128>(v) * h[v];
  }
  int best = -1;
  Fraction best_f{0, 1};
  __int128 n0 = 0, s0 = 0;
  for (int t = 0; t < 256; ++t) {
    n0 += h[t];
    s0 += static_cast<__int128>(t) * h[t];
    const __int128 n1 = n - n0;
    if (n0 == 0 || n1 == 0) continue;
    const __int128 d = s * n0 - s0 * n;
    const Fraction f{d * d, n0 * n1};
    if (best < 0 || f.num * best_f.den > best_f.num * f.den) {
      best = t;
      best_f = f;
    }
  }
  return best;
}

TEST(Otsu, BimodalSeparatesModes) {
  Histogram h{};
  h[10] = 500;
  h[200] = 300;
  const int t = otsu_threshold(h);
  EXPECT_GE(t, 10);
  EXPECT_LT(t, 200);
  EXPECT_EQ(t, brute_force_otsu(h));
}

TEST(Otsu, DegenerateHistograms) {
  Histogram h{};
  expect_error(ErrorKind::NoContrast, [&] { otsu_threshold(h); });
  h[77] = 1000;
  expect_error(ErrorKind::NoContrast, [&] { otsu_threshold(h); });
  expect_error(ErrorKind::NoContrast, [] { segment(Image(8, 8, 1, 90)); });
}

TEST(Otsu, MatchesBruteForceOnRandomHistograms) {
  Rng rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    Histogram h{};
    const int occupied = 2 + static_cast<int>(rng.below(40));
    for (int k = 0; k < occupied; ++k) h[rng.below(256)] += 1 + rng.below(1000);
    if (std::count_if(h.begin(), h.end(), [](auto c) { return c > 0; }) < 2) continue;
    ASSERT_EQ(otsu_threshold(h), brute_force_otsu(h)) << "trial " << trial;
  }
}

TEST(Otsu, MirroredHistogram) {
  Rng rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    Histogram h{}, m{};
    for (int k = 0; k < 6; ++k) h[rng.below(256)] += 1 + rng.below(500);
    if (std::count_if(h.begin(), h.end(), [](auto c) { return c > 0; }) < 2) continue;
    for (int v = 0; v < 256; ++v) m[255 - v] = h[v];
    const int t = otsu_threshold(h), tm = otsu_threshold(m);
    EXPECT_EQ(tm, brute_force_otsu(m));
    // The same partition seen from the other side; with empty bins between
    // the classes any threshold in the gap scores equally, and ties go low.
    int lo = t;
    while (lo > 0 && h[lo] == 0) --lo;
    int hi = t + 1;
    while (hi < 255 && h[hi] == 0) ++hi;
    EXPECT_EQ(tm, 255 - hi) << "t=" << t;
    EXPECT_LE(std::abs((254 - t) - tm), hi - lo);
  }
}

TEST(Binarize, ThresholdIsExclusive) {
  Image img(3, 1, 1);
  img.pixels = {99, 100, 101};
  EXPECT_EQ(binarize(img, 100).bits, (std::vector<std::uint8_t>{0, 0, 1}));
}

// ---------------------------------------------------------------- components

Mask flood_fill_largest(const Mask& m) {
  Mask seen(m.width, m.height), best(m.width, m.height);
  std::size_t best_size = 0;
  for (std::size_t y = 0; y < m.height; ++y) {
    for (std::size_t x = 0; x < m.width; ++x) {
      if (!m.at(x, y) || seen.at(x, y)) continue;
      Mask comp(m.width, m.height);
      std::size_t size = 0;
      std::deque<std::pair<std::size_t, std::size_t>> queue{{x, y}};
      seen.at(x, y) = 1;
      while (!queue.empty()) {
        auto [cx, cy] = queue.front();
        queue.pop_front();
        comp.at(cx, cy) = 1;
        ++size;
        const int dx[] = {1, -1, 0, 0}, dy[] = {0, 0, 1, -1};
        for (int k = 0; k < 4; ++k) {
          const long nx = static_cast<long>(cx) + dx[k], ny = static_cast<long>(cy) + dy[k];
          if (nx < 0 || ny < 0 || nx >= static_cast<long>(m.width) || ny >= static_cast<long>(m.height)) continue;
          const auto ux = static_cast<std::size_t>(nx), uy = static_cast<std::size_t>(ny);
          if (m.at(ux, uy) && !seen.at(ux, uy)) {
            seen.at(ux, uy) = 1;
            queue.emplace_back(ux, uy);
          }
        }
      }
      if (size > best_size) {
        best_size = size;
        best = comp;
      }
    }
  }
  return best;
}

TEST(LargestComponent, Cases) {
  Mask blob(5, 5);
  for (std::size_t y = 1; y < 4; ++y)
    for (std::size_t x = 1; x < 4; ++x) blob.at(x, y) = 1;
  EXPECT_EQ(largest_component(blob), blob);

  Mask two(8, 8);
  for (std::size_t y = 0; y < 3; ++y)
    for (std::size_t x = 0; x < 3; ++x) two.at(x, y) = 1;  // 9 pixels
  for (std::size_t y = 5; y < 7; ++y)
    for (std::size_t x = 5; x < 7; ++x) two.at(x, y) = 1;  // 4 pixels
  const Mask kept = largest_component(two);
  EXPECT_EQ(kept.count(), 9u);
  EXPECT_EQ(kept, flood_fill_largest(two));

  // Diagonal neighbours are not connected.
  const Mask diag = mask_from(2, 2, {1, 0, 0, 1});
  EXPECT_EQ(largest_component(diag), mask_from(2, 2, {1, 0, 0, 0}));

  expect_error(ErrorKind::EmptyMask, [] { largest_component(Mask(4, 4)); });
}

TEST(LargestComponent, MatchesFloodFillOnRandomMasks) {
  Rng rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    Mask m(12, 9);
    for (auto& b : m.bits) b = rng.bernoulli(0.45);
    if (m.count() == 0) continue;
    ASSERT_EQ(largest_component(m), flood_fill_largest(m)) << "trial " << trial;
  }
}

// ---------------------------------------------------------------- morphology

Mask set_dilate(const Mask& m, int r) {
  Mask out(m.width, m.height);
  for (std::size_t y = 0; y < m.height; ++y)
    for (std::size_t x = 0; x < m.width; ++x)
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          const long nx = static_cast<long>(x) + dx, ny = static_cast<long>(y) + dy;
          if (nx >= 0 && ny >= 0 && nx < static_cast<long>(m.width) && ny < static_cast<long>(m.height) &&
              m.at(static_cast<std::size_t>(nx), static_cast<std::size_t>(ny)))
            out.at(x, y) = 1;
        }
  return out;
}

Mask set_erode(const Mask& m, int r) {
  Mask out(m.width, m.height);
  for (std::size_t y = 0; y < m.height; ++y)
    for (std::size_t x = 0; x < m.width; ++x) {
      bool all = true;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          const long nx = static_cast<long>(x) + dx, ny = static_cast<long>(y) + dy;
          if (nx >= 0 && ny >= 0 && nx < static_cast<long>(m.width) && ny < static_cast<long>(m.height) &&
              !m.at(static_cast<std::size_t>(nx), static_cast<std::size_t>(ny)))
            all = false;
        }
      out.at(x, y) = all;
    }
  return out;
}

TEST(Morphology, RadiusZeroIsIdentity) {
  Rng rng(6);
  Mask m(9, 7);
  for (auto& b : m.bits) b = rng.bernoulli(0.5);
  EXPECT_EQ(morph_close(m, 0), m);
  EXPECT_EQ(dilate(m, 0), m);
  EXPECT_EQ(erode(m, 0), m);
}

TEST(Morphology, ClosingFillsOnePixelHole) {
  Mask m(11, 11);
  for (std::size_t y = 3; y < 8; ++y)
    for (std::size_t x = 3; x < 8; ++x) m.at(x, y) = 1;
  m.at(5, 5) = 0;
  Mask expect = m;
  expect.at(5, 5) = 1;
  EXPECT_EQ(morph_close(m, 1), expect);
  EXPECT_EQ(morph_close(m, 1), set_erode(set_dilate(m, 1), 1));
}

TEST(Morphology, MatchesSetOracleAndClosingProperties) {
  Rng rng(19);
  for (int trial = 0; trial < 100; ++trial) {
    Mask m(11, 8);
    for (auto& b : m.bits) b = rng.bernoulli(0.4);
    const int r = static_cast<int>(rng.below(3));
    ASSERT_EQ(dilate(m, r), set_dilate(m, r));
    ASSERT_EQ(erode(m, r), set_erode(m, r));
    const Mask c = morph_close(m, r);
    ASSERT_EQ(morph_close(c, r), c);
    for (std::size_t i = 0; i < m.bits.size(); ++i) ASSERT_LE(m.bits[i], c.bits[i]);
  }
}

// ---------------------------------------------------------------- segment

TEST(Segment, BinaryImageIsAFixedPoint) {
  Image img(16, 16, 1, 0);
  for (std::size_t y = 4; y < 12; ++y)
    for (std::size_t x = 3; x < 13; ++x) img.at(x, y) = 255;
  const Mask m = segment(img);
  EXPECT_EQ(iou(m, binarize(img, 127)), 1.0);
}

TEST(Segment, ColorInputGoesThroughLuminance) {
  Image img(16, 16, 3, 0);
  for (std::size_t y = 6; y < 10; ++y)
    for (std::size_t x = 6; x < 10; ++x)
      for (std::size_t c = 0; c < 3; ++c) img.at(x, y, c) = 220;
  EXPECT_EQ(segment(img).count(), 16u);
  EXPECT_EQ(to_gray(img).at(7, 7), 220);
}

TEST(Segment, RecoversGeneratedOrgans) {
  GenConfig cfg;
  std::size_t good = 0;
  const std::size_t n = 200;
  for (std::size_t i = 0; i < n; ++i) {
    const SyntheticSample s = render_sample(cfg, i % cfg.num_classes, cfg.spurious_corr_train, i);
    good += iou(segment(s.image), s.organ) >= 0.8;
  }
  EXPECT_GE(static_cast<double>(good) / n, 0.9);
}

}  // namespace
}  // namespace medfocus
