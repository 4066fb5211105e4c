#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "medfocus/encoders/model.hpp"
#include "medfocus/fewshot/manifest.hpp"
#include "medfocus/fewshot/split.hpp"
#include "medfocus/fusion/heads.hpp"
#include "medfocus/segmenter/image.hpp"

namespace medfocus {

enum class MaskMode { Builtin, External, None };

std::string_view to_string(MaskMode mode);
MaskMode mask_mode_from_string(std::string_view text);

struct TrainConfig {
  double lambda = 0.5;
  double learning_rate = 3e-4;
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  MaskMode mask_mode = MaskMode::Builtin;
  double probe_l2 = 1e-2;
  int close_radius = 2;
  /// Mask files named <id>.mask.pgm. Required for External; optional cache for Builtin.
  std::filesystem::path masks_dir;
  /// num_classes and vocab are filled from the dataset.
  ArchConfig arch;

  void validate() const;
};

/// Sets arch.num_classes from the dataset and, when the prompt list does not
/// match, the default class prompts.
TrainConfig bind_dataset(TrainConfig cfg, const DatasetManifest& manifest);

/// Flat JSON; every key optional on read, unknown keys rejected with InvalidConfig.
nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig apply_config_json(TrainConfig base, const nlohmann::json& j);

struct MaskSource {
  MaskMode mode = MaskMode::Builtin;
  std::filesystem::path masks_dir;
  int close_radius = 2;
};

/// The mask the pipeline would multiply into sample `index` (all ones for None).
Mask mask_for(const DatasetManifest& manifest, std::size_t index, const MaskSource& source);
/// The encoder input for sample `index`: the image times its mask.
Image prepare_image(const DatasetManifest& manifest, std::size_t index, const MaskSource& source);

struct LabeledImages {
  std::vector<Image> images;
  std::vector<std::size_t> labels;
  std::vector<std::size_t> indices;
};

LabeledImages load_images(const DatasetManifest& manifest, const std::vector<std::size_t>& indices,
                          const MaskSource& source);

struct TrainResult {
  ModelParams params;
  std::vector<double> epoch_losses;
  LossBreakdown initial;
  LossBreakdown final_loss;
};

/// Mean composite loss over the whole set, evaluated in batches without a graph.
LossBreakdown evaluate_loss(const ModelParams& params, const LabeledImages& data, double lambda,
                            std::size_t batch_size);

/// Adam over L = lambda L_c + (1 - lambda) L_e with a seeded per-epoch shuffle.
/// Throws EmptySplit when `data` is empty.
TrainResult train(const TrainConfig& cfg, const LabeledImages& data);

/// Convenience: loads the split's train images under cfg's mask mode, then trains.
TrainResult train(const TrainConfig& cfg, const DatasetManifest& manifest, const SplitManifest& split);

/// Writes the MFC1 parameter archive at `path` and a JSON sidecar next to it
/// (same stem, .json) holding the architecture and `meta`.
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params, const nlohmann::json& meta);

struct Checkpoint {
  ModelParams params;
  nlohmann::json meta;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);
std::filesystem::path checkpoint_sidecar(const std::filesystem::path& path);

}  // namespace medfocus
