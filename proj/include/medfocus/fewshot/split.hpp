#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include <json.hpp>

#include "medfocus/fewshot/manifest.hpp"

namespace medfocus {

struct SplitManifest {
  double fraction = 1.0;
  std::uint64_t seed = 0;
  /// Selected train-sample indices (into DatasetManifest::samples) per class, sorted.
  std::vector<std::vector<std::size_t>> per_class;

  /// All selected indices, sorted.
  std::vector<std::size_t> indices() const;
  friend bool operator==(const SplitManifest&, const SplitManifest&) = default;
};

/// max(1, round(fraction * class_size)).
std::size_t split_count(double fraction, std::size_t class_size);

/// Shuffles each class's train samples with a stream keyed by (seed, class)
/// and keeps the first split_count(...) of them. The shuffle does not depend
/// on the fraction, so smaller fractions are prefixes of larger ones.
/// Throws FractionOutOfRange outside (0, 1], EmptySplit when a class has no
/// train samples.
SplitManifest stratified_fraction_split(const DatasetManifest& manifest, double fraction, std::uint64_t seed);

nlohmann::json split_to_json(const SplitManifest& s);
SplitManifest split_from_json(const nlohmann::json& j);

/// root/splits/f<fraction>_s<seed>.json with the fraction printed in %g form.
std::filesystem::path split_path(const std::filesystem::path& root, double fraction, std::uint64_t seed);
void write_split(const std::filesystem::path& path, const SplitManifest& s);
SplitManifest read_split(const std::filesystem::path& path);
/// Loads the canonical split file when present, otherwise computes and writes it.
SplitManifest materialize_split(const DatasetManifest& manifest, double fraction, std::uint64_t seed);

}  // namespace medfocus
