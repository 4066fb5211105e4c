#include "medfocus/fusion/loss_check.hpp"

#include <algorithm>
#include <numeric>

#include "medfocus/fusion/heads.hpp"
#include "medfocus/numerics/gradcheck.hpp"
#include "medfocus/numerics/rng.hpp"

namespace medfocus {

ArchConfig small_check_arch() {
  ArchConfig a;
  a.image_size = 16;
  a.patch_size = 4;
  a.embed_dim = 16;
  a.num_layers = 2;
  a.num_heads = 2;
  a.mlp_ratio = 2;
  a.num_classes = 3;
  a.vocab = default_vocab(3);
  return a;
}

LossCheckResult composite_loss_grad_check(const ArchConfig& arch, std::uint64_t seed, double lambda, double h,
                                          std::size_t coords_per_tensor) {
  ModelParams params = init_params(arch, seed);
  Rng rng = Rng(seed).derive(0x6772616443ULL);
  std::vector<Image> images(2, Image(arch.image_size, arch.image_size, arch.channels));
  for (auto& image : images)
    for (auto& p : image.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  const std::vector<std::size_t> labels = {0, std::min<std::size_t>(1, arch.num_classes - 1)};
  const auto loss = [&] { return model_loss(params, images, labels, lambda).total; };

  LossCheckResult result;
  for (auto& [name, tensor] : params.tensors) {
    std::vector<std::size_t> coords(tensor.numel());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (coords_per_tensor > 0 && coords.size() > coords_per_tensor) {
      rng.shuffle(coords);
      coords.resize(coords_per_tensor);
    }
    const double err = grad_check(loss, tensor, h, coords);
    result.coordinates += coords.size();
    if (err >= result.max_relative_error) {
      result.max_relative_error = err;
      result.worst_parameter = name;
    }
  }
  return result;
}

}  // namespace medfocus
