#include "medfocus/encoders/model.hpp"

#include <cmath>

#include "medfocus/error.hpp"
#include "medfocus/numerics/rng.hpp"

namespace medfocus {

std::size_t ArchConfig::num_tokens() const {
  const std::size_t side = image_size / patch_size;
  return side * side + 1;
}

void ArchConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorKind::InvalidConfig, what); };
  if (image_size == 0 || patch_size == 0 || embed_dim == 0 || num_layers == 0 || num_heads == 0 ||
      mlp_ratio == 0 || num_classes == 0) {
    fail("architecture extents must be positive");
  }
  if (channels != 1 && channels != 3) fail("channels must be 1 or 3");
  if (image_size % patch_size != 0) fail("image_size must be divisible by patch_size");
  if (embed_dim % num_heads != 0) fail("embed_dim must be divisible by num_heads");
  if (vocab.size() != num_classes) {
    fail("vocab has " + std::to_string(vocab.size()) + " prompts for " + std::to_string(num_classes) + " classes");
  }
}

nlohmann::json to_json(const ArchConfig& a) {
  return {{"image_size", a.image_size}, {"patch_size", a.patch_size}, {"channels", a.channels},
          {"embed_dim", a.embed_dim},   {"num_layers", a.num_layers}, {"num_heads", a.num_heads},
          {"mlp_ratio", a.mlp_ratio},   {"num_classes", a.num_classes}, {"vocab", a.vocab}};
}

ArchConfig arch_from_json(const nlohmann::json& j) {
  ArchConfig a;
  try {
    a.image_size = j.at("image_size").get<std::size_t>();
    a.patch_size = j.at("patch_size").get<std::size_t>();
    a.channels = j.at("channels").get<std::size_t>();
    a.embed_dim = j.at("embed_dim").get<std::size_t>();
    a.num_layers = j.at("num_layers").get<std::size_t>();
    a.num_heads = j.at("num_heads").get<std::size_t>();
    a.mlp_ratio = j.at("mlp_ratio").get<std::size_t>();
    a.num_classes = j.at("num_classes").get<std::size_t>();
    a.vocab = j.at("vocab").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::SchemaViolation, std::string("architecture: ") + e.what());
  }
  return a;
}

const Tensor& ModelParams::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw Error(ErrorKind::ArchMismatch, "no parameter named '" + name + "'");
  return it->second;
}

std::vector<Tensor> ModelParams::list() const {
  std::vector<Tensor> out;
  out.reserve(tensors.size());
  for (const auto& [_, t] : tensors) out.push_back(t);
  return out;
}

std::size_t ModelParams::count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : tensors) n += t.numel();
  return n;
}

std::map<std::string, Shape> parameter_shapes(const ArchConfig& a) {
  const std::size_t d = a.embed_dim, hidden = a.embed_dim * a.mlp_ratio;
  std::map<std::string, Shape> s;
  s["patch_embed.weight"] = {a.patch_dim(), d};
  s["patch_embed.bias"] = {d};
  s["cls_token"] = {1, d};
  s["pos_embed"] = {a.num_tokens(), d};
  for (std::size_t l = 0; l < a.num_layers; ++l) {
    const std::string p = "blocks." + std::to_string(l) + ".";
    s[p + "ln1.gain"] = {d};
    s[p + "ln1.bias"] = {d};
    for (const char* w : {"wq", "wk", "wv", "wo"}) s[p + "attn." + w] = {d, d};
    for (const char* b : {"bq", "bk", "bv", "bo"}) s[p + "attn." + b] = {d};
    s[p + "ln2.gain"] = {d};
    s[p + "ln2.bias"] = {d};
    s[p + "mlp.w1"] = {d, hidden};
    s[p + "mlp.b1"] = {hidden};
    s[p + "mlp.w2"] = {hidden, d};
    s[p + "mlp.b2"] = {d};
  }
  s["final_ln.gain"] = {d};
  s["final_ln.bias"] = {d};
  s["image_proj"] = {d, d};
  s["text.embedding"] = {a.num_classes, d};
  s["text.proj"] = {d, d};
  s["fusion.text_weight"] = {d, d};
  s["head.weight"] = {d, a.num_classes};
  s["head.bias"] = {a.num_classes};
  s["logit_scale"] = {1};
  return s;
}

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

ModelParams init_params(const ArchConfig& arch, std::uint64_t seed) {
  arch.validate();
  ModelParams params{arch, {}};
  const Rng root(seed);
  for (const auto& [name, shape] : parameter_shapes(arch)) {
    const std::size_t n = shape_numel(shape);
    std::vector<double> values(n, 0.0);
    if (name == "logit_scale") {
      values[0] = std::log(1.0 / 0.07);
    } else if (ends_with(name, ".gain")) {
      values.assign(n, 1.0);
    } else if (ends_with(name, ".bias") || ends_with(name, ".b1") || ends_with(name, ".b2") ||
               name.find("attn.b") != std::string::npos) {
      // zero
    } else {
      Rng rng = root.derive(fnv1a(name));
      const double stddev = name == "pos_embed" ? 0.01 : 0.02;
      for (double& v : values) v = rng.normal(0.0, stddev);
    }
    params.tensors.emplace(name, Tensor::from(shape, std::move(values), true));
  }
  return params;
}

ModelParams params_from_tensors(const ArchConfig& arch, const TensorMap& tensors) {
  arch.validate();
  const auto shapes = parameter_shapes(arch);
  if (tensors.size() != shapes.size()) {
    throw Error(ErrorKind::ArchMismatch, "checkpoint holds " + std::to_string(tensors.size()) +
                                             " tensors, architecture needs " + std::to_string(shapes.size()));
  }
  ModelParams params{arch, {}};
  for (const auto& [name, shape] : shapes) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw Error(ErrorKind::ArchMismatch, "checkpoint lacks '" + name + "'");
    if (it->second.shape() != shape) {
      throw Error(ErrorKind::ArchMismatch, "'" + name + "' is " + shape_str(it->second.shape()) + ", expected " +
                                               shape_str(shape));
    }
    auto t = it->second.detach();
    t.set_requires_grad(true);
    params.tensors.emplace(name, std::move(t));
  }
  return params;
}

std::vector<std::string> default_vocab(std::size_t num_classes) {
  static const std::vector<std::string> kPrompts = {
      "a scan of an organ with no lesion",
      "a scan of an organ with a solid round lesion",
      "a scan of an organ with a ring-shaped lesion",
      "a scan of an organ with a cross-shaped lesion",
      "a scan of an organ with a square lesion",
      "a scan of an organ with a bar-shaped lesion",
  };
  std::vector<std::string> out;
  for (std::size_t i = 0; i < num_classes; ++i) {
    out.push_back(i < kPrompts.size() ? kPrompts[i] : "a scan of an organ of class " + std::to_string(i));
  }
  return out;
}

}  // namespace medfocus
