#include "medfocus/train_eval/train.hpp"

#include <algorithm>
#include <numeric>

#include "medfocus/error.hpp"
#include "medfocus/numerics/adam.hpp"
#include "medfocus/numerics/archive.hpp"
#include "medfocus/numerics/rng.hpp"
#include "medfocus/segmenter/segment.hpp"

namespace medfocus {

std::string_view to_string(MaskMode mode) {
  switch (mode) {
    case MaskMode::Builtin: return "builtin";
    case MaskMode::External: return "external";
    case MaskMode::None: return "none";
  }
  return "none";
}

MaskMode mask_mode_from_string(std::string_view text) {
  if (text == "builtin") return MaskMode::Builtin;
  if (text == "external") return MaskMode::External;
  if (text == "none") return MaskMode::None;
  throw Error(ErrorKind::InvalidConfig, "mask mode must be builtin, external or none, got '" + std::string(text) + "'");
}

void TrainConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw Error(ErrorKind::LambdaOutOfRange, "lambda " + std::to_string(lambda) + " outside [0, 1]");
  }
  if (batch_size < 1) throw Error(ErrorKind::InvalidConfig, "batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw Error(ErrorKind::InvalidConfig, "learning_rate must be positive");
  if (!(probe_l2 > 0.0)) throw Error(ErrorKind::InvalidConfig, "probe_l2 must be positive");
  if (close_radius < 0) throw Error(ErrorKind::InvalidConfig, "close_radius must be >= 0");
  if (mask_mode == MaskMode::External && masks_dir.empty()) {
    throw Error(ErrorKind::InvalidConfig, "external mask mode needs a masks directory");
  }
}

TrainConfig bind_dataset(TrainConfig cfg, const DatasetManifest& manifest) {
  cfg.arch.num_classes = manifest.num_classes();
  if (cfg.arch.vocab.size() != cfg.arch.num_classes) cfg.arch.vocab = default_vocab(cfg.arch.num_classes);
  return cfg;
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"lambda", c.lambda},
          {"learning_rate", c.learning_rate},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"mask_mode", std::string(to_string(c.mask_mode))},
          {"probe_l2", c.probe_l2},
          {"close_radius", c.close_radius},
          {"masks_dir", c.masks_dir.generic_string()},
          {"image_size", c.arch.image_size},
          {"patch_size", c.arch.patch_size},
          {"embed_dim", c.arch.embed_dim},
          {"num_layers", c.arch.num_layers},
          {"num_heads", c.arch.num_heads},
          {"mlp_ratio", c.arch.mlp_ratio}};
}

TrainConfig apply_config_json(TrainConfig c, const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorKind::InvalidConfig, "config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "lambda") c.lambda = value.get<double>();
      else if (key == "learning_rate") c.learning_rate = value.get<double>();
      else if (key == "epochs") c.epochs = value.get<std::size_t>();
      else if (key == "batch_size") c.batch_size = value.get<std::size_t>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "mask_mode") c.mask_mode = mask_mode_from_string(value.get<std::string>());
      else if (key == "probe_l2") c.probe_l2 = value.get<double>();
      else if (key == "close_radius") c.close_radius = value.get<int>();
      else if (key == "masks_dir") c.masks_dir = value.get<std::string>();
      else if (key == "image_size") c.arch.image_size = value.get<std::size_t>();
      else if (key == "patch_size") c.arch.patch_size = value.get<std::size_t>();
      else if (key == "embed_dim") c.arch.embed_dim = value.get<std::size_t>();
      else if (key == "num_layers") c.arch.num_layers = value.get<std::size_t>();
      else if (key == "num_heads") c.arch.num_heads = value.get<std::size_t>();
      else if (key == "mlp_ratio") c.arch.mlp_ratio = value.get<std::size_t>();
      else throw Error(ErrorKind::InvalidConfig, "unknown config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, std::string("config: ") + e.what());
  }
  return c;
}

Mask mask_for(const DatasetManifest& manifest, std::size_t index, const MaskSource& source) {
  const Image image = read_image(manifest.image_path(index));
  const auto mask_file = [&] { return source.masks_dir / (manifest.samples[index].id + ".mask.pgm"); };
  switch (source.mode) {
    case MaskMode::None:
      return Mask(image.width, image.height, 1);
    case MaskMode::External:
      return load_external_mask(mask_file(), image.width, image.height);
    case MaskMode::Builtin:
      if (!source.masks_dir.empty() && std::filesystem::exists(mask_file())) {
        return load_external_mask(mask_file(), image.width, image.height);
      }
      return segment(image, {source.close_radius});
  }
  return Mask(image.width, image.height, 1);
}

Image prepare_image(const DatasetManifest& manifest, std::size_t index, const MaskSource& source) {
  const Image image = read_image(manifest.image_path(index));
  if (source.mode == MaskMode::None) return image;
  return apply_mask(image, mask_for(manifest, index, source));
}

LabeledImages load_images(const DatasetManifest& manifest, const std::vector<std::size_t>& indices,
                          const MaskSource& source) {
  LabeledImages out;
  for (std::size_t i : indices) {
    if (i >= manifest.samples.size()) throw Error(ErrorKind::SchemaViolation, "sample index out of range");
    out.images.push_back(prepare_image(manifest, i, source));
    out.labels.push_back(manifest.samples[i].label);
    out.indices.push_back(i);
  }
  return out;
}

LossBreakdown evaluate_loss(const ModelParams& params, const LabeledImages& data, double lambda,
                            std::size_t batch_size) {
  NoGradGuard no_grad;
  double lc = 0.0, le = 0.0;
  const std::size_t n = data.images.size();
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t len = std::min(batch_size, n - start);
    const auto parts =
        model_loss(params, std::span(data.images).subspan(start, len), std::span(data.labels).subspan(start, len),
                   lambda)
            .parts;
    lc += parts.l_contrastive * static_cast<double>(len);
    le += parts.l_ce * static_cast<double>(len);
  }
  return composite_loss(lc / static_cast<double>(n), le / static_cast<double>(n), lambda);
}

TrainResult train(const TrainConfig& cfg, const LabeledImages& data) {
  cfg.validate();
  if (data.images.empty()) throw Error(ErrorKind::EmptySplit, "no training samples");
  TrainResult result{init_params(cfg.arch, cfg.seed), {}, {}, {}};
  ModelParams& params = result.params;
  std::vector<Tensor> list = params.list();
  AdamState adam;
  adam.learning_rate = cfg.learning_rate;
  result.initial = evaluate_loss(params, data, cfg.lambda, cfg.batch_size);

  std::vector<std::size_t> order(data.images.size());
  const Rng shuffle_root = Rng(cfg.seed).derive(0x5348554646ULL);
  std::vector<Image> batch_images;
  std::vector<std::size_t> batch_labels;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = shuffle_root.derive(epoch);
    rng.shuffle(order);
    double epoch_total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, order.size() - start);
      batch_images.clear();
      batch_labels.clear();
      for (std::size_t k = start; k < start + len; ++k) {
        batch_images.push_back(data.images[order[k]]);
        batch_labels.push_back(data.labels[order[k]]);
      }
      const CompositeLoss loss = model_loss(params, batch_images, batch_labels, cfg.lambda);
      backward(loss.total);
      adam_step(list, adam);
      for (auto& p : list) p.zero_grad();
      epoch_total += loss.parts.l_total * static_cast<double>(len);
    }
    result.epoch_losses.push_back(epoch_total / static_cast<double>(order.size()));
  }
  result.final_loss = evaluate_loss(params, data, cfg.lambda, cfg.batch_size);
  return result;
}

TrainResult train(const TrainConfig& cfg, const DatasetManifest& manifest, const SplitManifest& split) {
  const auto data = load_images(manifest, split.indices(), {cfg.mask_mode, cfg.masks_dir, cfg.close_radius});
  return train(cfg, data);
}

std::filesystem::path checkpoint_sidecar(const std::filesystem::path& path) {
  auto side = path;
  side.replace_extension(".json");
  return side;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params, const nlohmann::json& meta) {
  if (checkpoint_sidecar(path) == path) throw Error(ErrorKind::IoError, "checkpoint path must not end in .json");
  write_archive(path, params.tensors);
  nlohmann::json side = {{"format", "medfocus-checkpoint/1"}, {"arch", to_json(params.arch)}, {"meta", meta}};
  write_text_file(checkpoint_sidecar(path), side.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  nlohmann::json side;
  try {
    side = nlohmann::json::parse(read_text_file(checkpoint_sidecar(path)));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::SchemaViolation, checkpoint_sidecar(path).string() + ": " + e.what());
  }
  if (!side.contains("arch")) throw Error(ErrorKind::SchemaViolation, "checkpoint sidecar lacks 'arch'");
  const ArchConfig arch = arch_from_json(side.at("arch"));
  return {params_from_tensors(arch, read_archive(path)), side.value("meta", nlohmann::json::object())};
}

}  // namespace medfocus
