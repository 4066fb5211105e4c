#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace medfocus {

enum class Role { Train, Test };

std::string_view to_string(Role role);

struct SampleRecord {
  std::string id;
  std::string image;  // relative to the dataset root
  std::string mask;   // ground-truth organ mask, relative to the root
  std::size_t label = 0;
  Role role = Role::Train;
  /// Fields this reader does not know about; written back unchanged.
  nlohmann::json extra = nlohmann::json::object();
};

// manifest.json layout:
// {
//   "root": ".",                   dataset root relative to the manifest
//   "classes": ["normal", ...],    label i is classes[i]
//   "samples": [{"id", "image", "mask", "label", "role": "train"|"test", ...}],
//   ...                            any other keys are preserved
// }
struct DatasetManifest {
  std::filesystem::path root;  // resolved on read; not serialized
  std::string root_field = ".";
  std::vector<std::string> classes;
  std::vector<SampleRecord> samples;
  nlohmann::json extra = nlohmann::json::object();

  std::size_t num_classes() const { return classes.size(); }
  std::filesystem::path image_path(std::size_t i) const { return root / samples[i].image; }
  std::filesystem::path mask_path(std::size_t i) const { return root / samples[i].mask; }
  std::vector<std::size_t> indices(Role role) const;
};

nlohmann::json manifest_to_json(const DatasetManifest& m);
/// Throws SchemaViolation on missing or mistyped fields, labels >= C, or
/// roles outside {train, test}.
DatasetManifest manifest_from_json(const nlohmann::json& j, const std::filesystem::path& root);

std::string dump_manifest(const DatasetManifest& m);
void write_manifest(const std::filesystem::path& path, const DatasetManifest& m);
DatasetManifest read_manifest(const std::filesystem::path& path);
/// Opens every referenced image and mask; throws on the first failure.
void verify_manifest_files(const DatasetManifest& m);

}  // namespace medfocus
