#include "medfocus/fewshot/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "medfocus/error.hpp"
#include "medfocus/numerics/rng.hpp"
#include "medfocus/segmenter/segment.hpp"

namespace medfocus {

void GenConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorKind::InvalidConfig, "generator: " + what); };
  if (num_classes < 1 || num_classes > kMaxClasses) fail("num_classes must be in [1, 6]");
  if (per_class_train < 1 || per_class_test < 1) fail("per-class counts must be >= 1");
  if (image_size < 32) fail("image_size must be >= 32");
  for (double p : {clutter_strength, spurious_corr_train, spurious_corr_test}) {
    if (!(p >= 0.0 && p <= 1.0)) fail("probabilities and strengths must lie in [0, 1]");
  }
}

nlohmann::json to_json(const GenConfig& c) {
  return {{"num_classes", c.num_classes},
          {"per_class_train", c.per_class_train},
          {"per_class_test", c.per_class_test},
          {"image_size", c.image_size},
          {"clutter_strength", c.clutter_strength},
          {"spurious_corr_train", c.spurious_corr_train},
          {"spurious_corr_test", c.spurious_corr_test},
          {"seed", c.seed}};
}

std::string class_name(std::size_t label) {
  static const char* kNames[kMaxClasses] = {"normal", "disc", "ring", "cross", "square", "bar"};
  return label < kMaxClasses ? kNames[label] : "class" + std::to_string(label);
}

namespace {

// Intensities on a 0..255 scale.
constexpr double kBackground = 30.0;
constexpr double kOrgan = 150.0;
constexpr double kLesion = 255.0;
constexpr double kNoise = 3.0;

bool glyph_covers(Glyph kind, int dx, int dy, int r) {
  const int d2 = dx * dx + dy * dy;
  switch (kind) {
    case Glyph::None: return false;
    case Glyph::Disc: return d2 <= r * r;
    case Glyph::Ring: return d2 <= r * r && d2 > (r - 2) * (r - 2);
    case Glyph::Cross: return (std::abs(dx) <= 1 && std::abs(dy) <= r) || (std::abs(dy) <= 1 && std::abs(dx) <= r);
    case Glyph::Square: return std::abs(dx) <= r - 1 && std::abs(dy) <= r - 1;
    case Glyph::Bar: return std::abs(dx - dy) <= 1 && std::abs(dx) <= r - 1 && std::abs(dy) <= r - 1;
  }
  return false;
}

/// Glyph pixels centered at (cx, cy); nullopt if any pixel falls off the raster.
std::optional<Mask> glyph_mask(std::size_t size, Glyph kind, int cx, int cy, int r) {
  Mask m(size, size);
  const int n = static_cast<int>(size);
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      if (!glyph_covers(kind, dx, dy, r)) continue;
      const int x = cx + dx, y = cy + dy;
      if (x < 0 || y < 0 || x >= n || y >= n) return std::nullopt;
      m.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) = 1;
    }
  }
  return m;
}

bool overlaps(const Mask& a, const Mask& b) {
  for (std::size_t i = 0; i < a.bits.size(); ++i)
    if (a.bits[i] && b.bits[i]) return true;
  return false;
}

bool contains(const Mask& outer, const Mask& inner) {
  for (std::size_t i = 0; i < inner.bits.size(); ++i)
    if (inner.bits[i] && !outer.bits[i]) return false;
  return true;
}

/// Inclusive rectangle, clipped to the raster.
Mask box_mask(std::size_t size, int x0, int y0, int x1, int y1) {
  Mask m(size, size);
  const int n = static_cast<int>(size);
  for (int y = std::max(0, y0); y <= std::min(n - 1, y1); ++y)
    for (int x = std::max(0, x0); x <= std::min(n - 1, x1); ++x)
      m.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) = 1;
  return m;
}

Mask corner_zones(std::size_t size) {
  const std::size_t zone = size * 3 / 16;
  Mask m(size, size);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x)
      if ((x < zone || x >= size - zone) && (y < zone || y >= size - zone)) m.at(x, y) = 1;
  return m;
}

void paint(std::vector<double>& canvas, const Mask& where, double value) {
  for (std::size_t i = 0; i < where.bits.size(); ++i)
    if (where.bits[i]) canvas[i] = value;
}

}  // namespace

SyntheticSample render_sample(const GenConfig& cfg, std::size_t label, double spurious_corr, std::uint64_t stream) {
  const std::size_t n = cfg.image_size;
  const double s = static_cast<double>(n) / 64.0;
  Rng rng = Rng(cfg.seed).derive(stream);
  const Mask corners = corner_zones(n);
  SyntheticSample out;

  // Organ: a rotated ellipse kept clear of the marker corners.
  Mask organ(n, n);
  for (int attempt = 0;; ++attempt) {
    const double cx = rng.uniform(24.0, 40.0) * s, cy = rng.uniform(24.0, 40.0) * s;
    const double ax = rng.uniform(16.0, 20.0) * s, ay = rng.uniform(16.0, 20.0) * s;
    const double theta = rng.uniform(0.0, std::numbers::pi);
    const double ct = std::cos(theta), st = std::sin(theta);
    organ = Mask(n, n);
    for (std::size_t y = 0; y < n; ++y) {
      for (std::size_t x = 0; x < n; ++x) {
        const double px = static_cast<double>(x) + 0.5 - cx, py = static_cast<double>(y) + 0.5 - cy;
        const double u = (px * ct + py * st) / ax, v = (-px * st + py * ct) / ay;
        organ.at(x, y) = u * u + v * v <= 1.0 ? 1 : 0;
      }
    }
    if (!overlaps(dilate(organ, 2), corners) || attempt > 100) break;
  }
  out.organ = organ;

  // Lesion glyph, bounding box included, inside the organ and one pixel clear
  // of its border.
  const auto kind = static_cast<Glyph>(label);
  out.lesion = Mask(n, n);
  if (kind != Glyph::None) {
    const Mask inner = erode(organ, 1);
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < inner.bits.size(); ++i)
      if (inner.bits[i]) candidates.push_back(i);
    for (int attempt = 0; attempt < 400; ++attempt) {
      const int r = static_cast<int>(std::lround(static_cast<double>(rng.range(8, 10)) * s));
      const std::size_t c = candidates[rng.below(candidates.size())];
      const int cx = static_cast<int>(c % n), cy = static_cast<int>(c / n);
      auto g = glyph_mask(n, kind, cx, cy, r);
      if (g && contains(inner, box_mask(n, cx - r, cy - r, cx + r, cy + r))) {
        out.lesion = *g;
        break;
      }
    }
    if (out.lesion.count() == 0) throw Error(ErrorKind::IoError, "could not place a lesion glyph");
    Box box{static_cast<int>(n), static_cast<int>(n), -1, -1};
    for (std::size_t y = 0; y < n; ++y) {
      for (std::size_t x = 0; x < n; ++x) {
        if (!out.lesion.at(x, y)) continue;
        box.x0 = std::min(box.x0, static_cast<int>(x));
        box.y0 = std::min(box.y0, static_cast<int>(y));
        box.x1 = std::max(box.x1, static_cast<int>(x));
        box.y1 = std::max(box.y1, static_cast<int>(y));
      }
    }
    out.lesion_box = box;
  }

  // Background clutter: glyphs of any lesion kind, well away from the organ so
  // that morphological closing cannot bridge them to it.
  Mask clutter(n, n);
  Mask forbidden = dilate(organ, static_cast<int>(std::lround(6 * s)));
  for (std::size_t i = 0; i < forbidden.bits.size(); ++i) forbidden.bits[i] |= corners.bits[i];
  const auto clutter_count = static_cast<int>(std::lround(6.0 * cfg.clutter_strength));
  for (int k = 0; k < clutter_count; ++k) {
    const auto ckind = static_cast<Glyph>(rng.range(1, static_cast<std::int64_t>(kMaxClasses) - 1));
    const int r = static_cast<int>(std::lround(static_cast<double>(rng.range(5, 8)) * s));
    for (int attempt = 0; attempt < 50; ++attempt) {
      const auto cx = static_cast<int>(rng.below(n)), cy = static_cast<int>(rng.below(n));
      auto g = glyph_mask(n, ckind, cx, cy, r);
      if (!g || overlaps(*g, forbidden)) continue;
      for (std::size_t i = 0; i < g->bits.size(); ++i) clutter.bits[i] |= g->bits[i];
      break;
    }
  }

  // Spurious corner marker.
  const bool correlated = rng.bernoulli(spurious_corr);
  const int uniform_corner = static_cast<int>(rng.below(4));
  out.marker_corner = correlated ? static_cast<int>(label % 4) : uniform_corner;
  const std::size_t side = std::max<std::size_t>(3, n * 10 / 64), off = std::max<std::size_t>(1, n / 64);
  const std::size_t mx = (out.marker_corner % 2 == 0) ? off : n - off - side;
  const std::size_t my = (out.marker_corner / 2 == 0) ? off : n - off - side;
  Mask marker(n, n);
  for (std::size_t y = my; y < my + side; ++y)
    for (std::size_t x = mx; x < mx + side; ++x) marker.at(x, y) = 1;

  std::vector<double> canvas(n * n, kBackground);
  paint(canvas, organ, kOrgan);
  paint(canvas, out.lesion, kLesion);
  paint(canvas, clutter, 60.0 + 195.0 * cfg.clutter_strength);
  paint(canvas, marker, 255.0);
  out.image = Image(n, n, 1);
  for (std::size_t i = 0; i < canvas.size(); ++i) {
    const double v = marker.bits[i] ? canvas[i] : canvas[i] + rng.normal(0.0, kNoise);
    out.image.pixels[i] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
  }
  return out;
}

DatasetManifest generate_synthetic(const GenConfig& cfg, const std::filesystem::path& root) {
  cfg.validate();
  DatasetManifest manifest;
  manifest.root = root;
  for (std::size_t c = 0; c < cfg.num_classes; ++c) manifest.classes.push_back(class_name(c));
  manifest.extra["generator"] = to_json(cfg);

  char id[32];
  for (Role role : {Role::Train, Role::Test}) {
    const std::size_t per_class = role == Role::Train ? cfg.per_class_train : cfg.per_class_test;
    const double corr = role == Role::Train ? cfg.spurious_corr_train : cfg.spurious_corr_test;
    const std::uint64_t stream_base = role == Role::Train ? 0 : (std::uint64_t{1} << 32);
    std::size_t counter = 0;
    for (std::size_t c = 0; c < cfg.num_classes; ++c) {
      for (std::size_t k = 0; k < per_class; ++k, ++counter) {
        std::snprintf(id, sizeof id, "%s_%05zu", std::string(to_string(role)).c_str(), counter);
        const SyntheticSample sample = render_sample(cfg, c, corr, stream_base + counter);
        SampleRecord rec;
        rec.id = id;
        rec.image = std::string(to_string(role)) + "/" + class_name(c) + "/" + id + ".pgm";
        rec.mask = std::string("gt_masks/") + id + ".mask.pgm";
        rec.label = c;
        rec.role = role;
        rec.extra["marker_corner"] = sample.marker_corner;
        if (sample.lesion_box) {
          const Box& b = *sample.lesion_box;
          rec.extra["lesion_bbox"] = {b.x0, b.y0, b.x1, b.y1};
        } else {
          rec.extra["lesion_bbox"] = nullptr;
        }
        write_image(root / rec.image, sample.image);
        write_mask(root / rec.mask, sample.organ);
        manifest.samples.push_back(std::move(rec));
      }
    }
  }
  write_manifest(root / "manifest.json", manifest);
  return manifest;
}

}  // namespace medfocus
