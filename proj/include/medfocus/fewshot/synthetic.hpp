#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>

#include <json.hpp>

#include "medfocus/fewshot/manifest.hpp"
#include "medfocus/segmenter/image.hpp"

namespace medfocus {

struct GenConfig {
  std::size_t num_classes = 4;
  std::size_t per_class_train = 100;
  std::size_t per_class_test = 50;
  std::size_t image_size = 64;
  double clutter_strength = 0.7;
  double spurious_corr_train = 0.9;
  double spurious_corr_test = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const GenConfig& cfg);

/// Glyph kinds drawn inside the organ; class c uses kind c.
enum class Glyph { None = 0, Disc, Ring, Cross, Square, Bar };
inline constexpr std::size_t kMaxClasses = 6;

std::string class_name(std::size_t label);

struct Box {
  int x0, y0, x1, y1;  // inclusive
};

struct SyntheticSample {
  Image image;
  Mask organ;       // ground truth
  Mask lesion;      // glyph pixels (empty for class 0)
  int marker_corner = 0;  // 0 top-left, 1 top-right, 2 bottom-left, 3 bottom-right
  std::optional<Box> lesion_box;
};

/// One sample: dark noisy background, bright elliptical organ, a class glyph
/// inside the organ, clutter glyphs outside it, and a corner marker whose
/// position equals label % 4 with probability `spurious_corr` and is uniform
/// otherwise. Deterministic in (cfg.seed, stream).
SyntheticSample render_sample(const GenConfig& cfg, std::size_t label, double spurious_corr, std::uint64_t stream);

/// Writes root/{train,test}/<class>/<id>.pgm, root/gt_masks/<id>.mask.pgm and
/// root/manifest.json. Returns the manifest.
DatasetManifest generate_synthetic(const GenConfig& cfg, const std::filesystem::path& root);

}  // namespace medfocus
