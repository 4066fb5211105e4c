#include "medfocus/encoders/encoders.hpp"

#include <array>
#include <cmath>

#include "medfocus/error.hpp"
#include "medfocus/numerics/ops.hpp"

namespace medfocus {

Tensor patchify(const Image& image, std::size_t p) {
  if (p == 0 || image.width % p != 0 || image.height % p != 0) {
    throw Error(ErrorKind::IndivisibleDims, std::to_string(image.width) + "x" + std::to_string(image.height) +
                                                " is not divisible into " + std::to_string(p) + "-pixel patches");
  }
  const std::size_t c = image.channels;
  const std::size_t gx = image.width / p, gy = image.height / p;
  const std::size_t row_len = p * p * c;
  std::vector<double> out(gx * gy * row_len);
  std::size_t k = 0;
  for (std::size_t py = 0; py < gy; ++py)
    for (std::size_t px = 0; px < gx; ++px)
      for (std::size_t y = 0; y < p; ++y)
        for (std::size_t x = 0; x < p; ++x)
          for (std::size_t ch = 0; ch < c; ++ch) out[k++] = image.at(px * p + x, py * p + y, ch) / 255.0;
  return Tensor::from({gx * gy, row_len}, std::move(out));
}

Image unpatchify(const Tensor& patches, std::size_t p, std::size_t width, std::size_t height, std::size_t channels) {
  if (p == 0 || width % p != 0 || height % p != 0) throw Error(ErrorKind::IndivisibleDims, "unpatchify");
  const std::size_t gx = width / p, gy = height / p;
  if (patches.shape() != Shape{gx * gy, p * p * channels}) {
    throw Error(ErrorKind::ShapeMismatch, "unpatchify: patch tensor " + shape_str(patches.shape()));
  }
  Image image(width, height, channels);
  auto v = patches.data();
  std::size_t k = 0;
  for (std::size_t py = 0; py < gy; ++py)
    for (std::size_t px = 0; px < gx; ++px)
      for (std::size_t y = 0; y < p; ++y)
        for (std::size_t x = 0; x < p; ++x)
          for (std::size_t ch = 0; ch < channels; ++ch)
            image.at(px * p + x, py * p + y, ch) = static_cast<std::uint8_t>(std::lround(v[k++] * 255.0));
  return image;
}

namespace {

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) { return add_rows(matmul(x, w), b); }

Tensor attention(const ModelParams& params, const std::string& prefix, const Tensor& x) {
  const ArchConfig& a = params.arch;
  const Tensor q = linear(x, params.at(prefix + "wq"), params.at(prefix + "bq"));
  const Tensor k = linear(x, params.at(prefix + "wk"), params.at(prefix + "bk"));
  const Tensor v = linear(x, params.at(prefix + "wv"), params.at(prefix + "bv"));
  const std::size_t dh = a.head_dim();
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> heads;
  heads.reserve(a.num_heads);
  for (std::size_t h = 0; h < a.num_heads; ++h) {
    const Tensor qh = slice_cols(q, h * dh, dh);
    const Tensor kh = slice_cols(k, h * dh, dh);
    const Tensor vh = slice_cols(v, h * dh, dh);
    const Tensor weights = softmax(scale(matmul(qh, transpose(kh)), inv_sqrt), 1);
    heads.push_back(matmul(weights, vh));
  }
  return linear(concat_cols(heads), params.at(prefix + "wo"), params.at(prefix + "bo"));
}

}  // namespace

Tensor vit_encode_patches(const ModelParams& params, const Tensor& patches) {
  const ArchConfig& a = params.arch;
  if (patches.rank() != 2 || patches.dim(0) + 1 != a.num_tokens() || patches.dim(1) != a.patch_dim()) {
    throw Error(ErrorKind::ShapeMismatch, "patches " + shape_str(patches.shape()) + " do not fit the architecture");
  }
  Tensor x = linear(patches, params.at("patch_embed.weight"), params.at("patch_embed.bias"));
  x = concat_rows(params.at("cls_token"), x);
  x = add(x, params.at("pos_embed"));
  for (std::size_t l = 0; l < a.num_layers; ++l) {
    const std::string p = "blocks." + std::to_string(l) + ".";
    const Tensor h1 = layer_norm(x, params.at(p + "ln1.gain"), params.at(p + "ln1.bias"));
    x = add(x, attention(params, p + "attn.", h1));
    const Tensor h2 = layer_norm(x, params.at(p + "ln2.gain"), params.at(p + "ln2.bias"));
    const Tensor hidden = gelu(linear(h2, params.at(p + "mlp.w1"), params.at(p + "mlp.b1")));
    x = add(x, linear(hidden, params.at(p + "mlp.w2"), params.at(p + "mlp.b2")));
  }
  return layer_norm(x, params.at("final_ln.gain"), params.at("final_ln.bias"));
}

Tensor vit_encode(const ModelParams& params, const Image& image) {
  const ArchConfig& a = params.arch;
  if (image.width != a.image_size || image.height != a.image_size || image.channels != a.channels) {
    throw Error(ErrorKind::ShapeMismatch, "image " + std::to_string(image.width) + "x" +
                                              std::to_string(image.height) + "x" + std::to_string(image.channels) +
                                              " does not match the architecture");
  }
  return vit_encode_patches(params, patchify(image, a.patch_size));
}

Tensor pool_project(const ModelParams& params, const Tensor& tokens) {
  const std::size_t d = params.arch.embed_dim;
  const Tensor cls = reshape(row(tokens, 0), {1, d});
  return reshape(l2_normalize(matmul(cls, params.at("image_proj"))), {d});
}

Tensor text_encode(const ModelParams& params, std::size_t class_id) {
  const ArchConfig& a = params.arch;
  if (class_id >= a.num_classes) {
    throw Error(ErrorKind::UnknownClass, "class " + std::to_string(class_id) + " of " +
                                             std::to_string(a.num_classes));
  }
  const Tensor e = reshape(row(params.at("text.embedding"), class_id), {1, a.embed_dim});
  return reshape(l2_normalize(matmul(e, params.at("text.proj"))), {a.embed_dim});
}

Tensor text_matrix(const ModelParams& params) {
  return l2_normalize(matmul(params.at("text.embedding"), params.at("text.proj")));
}

}  // namespace medfocus
