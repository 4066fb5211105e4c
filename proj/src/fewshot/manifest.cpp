#include "medfocus/fewshot/manifest.hpp"

#include "medfocus/error.hpp"
#include "medfocus/numerics/archive.hpp"
#include "medfocus/segmenter/image.hpp"

namespace medfocus {

std::string_view to_string(Role role) { return role == Role::Train ? "train" : "test"; }

std::vector<std::size_t> DatasetManifest::indices(Role role) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].role == role) out.push_back(i);
  }
  return out;
}

nlohmann::json manifest_to_json(const DatasetManifest& m) {
  nlohmann::json j = m.extra;
  j["root"] = m.root_field;
  j["classes"] = m.classes;
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& s : m.samples) {
    nlohmann::json r = s.extra;
    r["id"] = s.id;
    r["image"] = s.image;
    r["mask"] = s.mask;
    r["label"] = s.label;
    r["role"] = std::string(to_string(s.role));
    samples.push_back(std::move(r));
  }
  j["samples"] = std::move(samples);
  return j;
}

namespace {

[[noreturn]] void violation(const std::string& what) { throw Error(ErrorKind::SchemaViolation, "manifest: " + what); }

template <typename T>
T take(nlohmann::json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) violation(where + " is missing '" + key + "'");
  try {
    T value = it->get<T>();
    obj.erase(it);
    return value;
  } catch (const nlohmann::json::exception&) {
    violation(where + " has a mistyped '" + key + "'");
  }
}

}  // namespace

DatasetManifest manifest_from_json(const nlohmann::json& j, const std::filesystem::path& root) {
  if (!j.is_object()) violation("top level is not an object");
  nlohmann::json rest = j;
  DatasetManifest m;
  m.root_field = take<std::string>(rest, "root", "manifest");
  m.root = root / m.root_field;
  m.classes = take<std::vector<std::string>>(rest, "classes", "manifest");
  auto samples = take<nlohmann::json>(rest, "samples", "manifest");
  if (!samples.is_array()) violation("'samples' is not an array");
  if (m.classes.empty()) violation("no classes");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    nlohmann::json r = samples[i];
    const std::string where = "sample " + std::to_string(i);
    if (!r.is_object()) violation(where + " is not an object");
    SampleRecord s;
    s.id = take<std::string>(r, "id", where);
    s.image = take<std::string>(r, "image", where);
    s.mask = take<std::string>(r, "mask", where);
    s.label = take<std::size_t>(r, "label", where);
    const auto role = take<std::string>(r, "role", where);
    if (role == "train") {
      s.role = Role::Train;
    } else if (role == "test") {
      s.role = Role::Test;
    } else {
      violation(where + " has role '" + role + "'");
    }
    if (s.label >= m.classes.size()) violation(where + " has label " + std::to_string(s.label) + " >= C");
    s.extra = std::move(r);
    m.samples.push_back(std::move(s));
  }
  m.extra = std::move(rest);
  return m;
}

std::string dump_manifest(const DatasetManifest& m) { return manifest_to_json(m).dump(2) + "\n"; }

void write_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
  write_text_file(path, dump_manifest(m));
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    violation(path.string() + " is not JSON: " + e.what());
  }
  return manifest_from_json(j, path.parent_path());
}

void verify_manifest_files(const DatasetManifest& m) {
  for (std::size_t i = 0; i < m.samples.size(); ++i) {
    const Image image = read_image(m.image_path(i));
    (void)load_external_mask(m.mask_path(i), image.width, image.height);
  }
}

}  // namespace medfocus
