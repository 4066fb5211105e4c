#include "medfocus/fewshot/split.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "medfocus/error.hpp"
#include "medfocus/numerics/archive.hpp"
#include "medfocus/numerics/rng.hpp"

namespace medfocus {

std::vector<std::size_t> SplitManifest::indices() const {
  std::vector<std::size_t> out;
  for (const auto& c : per_class) out.insert(out.end(), c.begin(), c.end());
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t split_count(double fraction, std::size_t class_size) {
  const auto n = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(class_size)));
  return std::clamp<std::size_t>(n, 1, class_size);
}

SplitManifest stratified_fraction_split(const DatasetManifest& manifest, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw Error(ErrorKind::FractionOutOfRange, "fraction " + std::to_string(fraction) + " outside (0, 1]");
  }
  std::vector<std::vector<std::size_t>> by_class(manifest.num_classes());
  for (std::size_t i : manifest.indices(Role::Train)) by_class[manifest.samples[i].label].push_back(i);

  SplitManifest split{fraction, seed, {}};
  const Rng root(seed);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto pool = by_class[c];
    if (pool.empty()) throw Error(ErrorKind::EmptySplit, "class " + std::to_string(c) + " has no train samples");
    Rng rng = root.derive(c);
    rng.shuffle(pool);
    pool.resize(split_count(fraction, pool.size()));
    std::sort(pool.begin(), pool.end());
    split.per_class.push_back(std::move(pool));
  }
  return split;
}

nlohmann::json split_to_json(const SplitManifest& s) {
  std::vector<std::size_t> counts;
  for (const auto& c : s.per_class) counts.push_back(c.size());
  return {{"fraction", s.fraction}, {"seed", s.seed}, {"per_class", s.per_class}, {"counts", counts}};
}

SplitManifest split_from_json(const nlohmann::json& j) {
  try {
    return {j.at("fraction").get<double>(), j.at("seed").get<std::uint64_t>(),
            j.at("per_class").get<std::vector<std::vector<std::size_t>>>()};
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::SchemaViolation, std::string("split: ") + e.what());
  }
}

std::filesystem::path split_path(const std::filesystem::path& root, double fraction, std::uint64_t seed) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "f%g_s%llu.json", fraction, static_cast<unsigned long long>(seed));
  return root / "splits" / buf;
}

void write_split(const std::filesystem::path& path, const SplitManifest& s) {
  write_text_file(path, split_to_json(s).dump(2) + "\n");
}

SplitManifest read_split(const std::filesystem::path& path) {
  try {
    return split_from_json(nlohmann::json::parse(read_text_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::SchemaViolation, path.string() + ": " + e.what());
  }
}

SplitManifest materialize_split(const DatasetManifest& manifest, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw Error(ErrorKind::FractionOutOfRange, "fraction " + std::to_string(fraction) + " outside (0, 1]");
  }
  const auto path = split_path(manifest.root, fraction, seed);
  if (std::filesystem::exists(path)) {
    SplitManifest s = read_split(path);
    for (const auto& c : s.per_class)
      for (std::size_t i : c)
        if (i >= manifest.samples.size() || manifest.samples[i].role != Role::Train)
          throw Error(ErrorKind::SchemaViolation, path.string() + " selects a non-train sample");
    return s;
  }
  SplitManifest s = stratified_fraction_split(manifest, fraction, seed);
  write_split(path, s);
  return s;
}

}  // namespace medfocus
