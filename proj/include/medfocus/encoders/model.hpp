#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "medfocus/numerics/archive.hpp"
#include "medfocus/numerics/tensor.hpp"

namespace medfocus {

struct ArchConfig {
  std::size_t image_size = 64;
  std::size_t patch_size = 8;
  std::size_t channels = 1;
  std::size_t embed_dim = 64;
  std::size_t num_layers = 2;
  std::size_t num_heads = 4;
  std::size_t mlp_ratio = 4;
  std::size_t num_classes = 4;
  /// One descriptive prompt per class, in label order.
  std::vector<std::string> vocab;

  /// Token count including CLS: (image_size / patch_size)^2 + 1.
  std::size_t num_tokens() const;
  std::size_t patch_dim() const { return patch_size * patch_size * channels; }
  std::size_t head_dim() const { return embed_dim / num_heads; }
  /// Throws InvalidConfig when an invariant is broken.
  void validate() const;

  friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

nlohmann::json to_json(const ArchConfig& arch);
/// Throws SchemaViolation on missing or mistyped keys.
ArchConfig arch_from_json(const nlohmann::json& j);

/// Named parameter tensors of the image encoder, text encoder, fusion and
/// classification head, plus the contrastive log logit-scale.
struct ModelParams {
  ArchConfig arch;
  TensorMap tensors;

  const Tensor& at(const std::string& name) const;
  /// All parameters in name order.
  std::vector<Tensor> list() const;
  std::size_t count() const;
};

/// Expected shape of every parameter for `arch`, by name.
std::map<std::string, Shape> parameter_shapes(const ArchConfig& arch);

/// Weights ~ N(0, 0.02), positional embeddings ~ N(0, 0.01), biases 0,
/// layer-norm gains 1, log logit-scale ln(1/0.07). Each tensor draws from its
/// own stream keyed by name, so the result is independent of creation order.
ModelParams init_params(const ArchConfig& arch, std::uint64_t seed);

/// Rebuilds parameters from archived tensors; throws ArchMismatch when a
/// tensor is missing, extra or mis-shaped.
ModelParams params_from_tensors(const ArchConfig& arch, const TensorMap& tensors);

/// Default class prompts for the synthetic lesion classes.
std::vector<std::string> default_vocab(std::size_t num_classes);

}  // namespace medfocus
