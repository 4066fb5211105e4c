#include "medfocus/fusion/heads.hpp"

#include <cmath>
#include <string>

#include "medfocus/encoders/encoders.hpp"
#include "medfocus/error.hpp"
#include "medfocus/numerics/ops.hpp"

namespace medfocus {

namespace {

constexpr double kMinLogScale = -4.605170185988091;  // ln(1/100)
constexpr double kMaxLogScale = 4.605170185988091;   // ln(100)

void require_unit_rows(const Tensor& x, const char* what) {
  const std::size_t d = x.shape().back();
  auto v = x.data();
  for (std::size_t r = 0; r < x.numel() / d; ++r) {
    double ss = 0.0;
    for (std::size_t j = 0; j < d; ++j) ss += v[r * d + j] * v[r * d + j];
    if (std::abs(std::sqrt(ss) - 1.0) > 1e-6) {
      throw Error(ErrorKind::NonNormalizedInput, std::string(what) + " row " + std::to_string(r) +
                                                     " has norm " + std::to_string(std::sqrt(ss)));
    }
  }
}

Tensor similarity_logits(const Tensor& image_emb, const Tensor& class_text, std::span<const std::size_t> labels) {
  if (image_emb.rank() != 2 || class_text.rank() != 2 || image_emb.dim(1) != class_text.dim(1)) {
    throw Error(ErrorKind::ShapeMismatch, "contrastive_loss: embeddings " + shape_str(image_emb.shape()) +
                                              " vs class text " + shape_str(class_text.shape()));
  }
  if (labels.size() != image_emb.dim(0)) throw Error(ErrorKind::ShapeMismatch, "contrastive_loss: label count");
  require_unit_rows(image_emb, "image embedding");
  require_unit_rows(class_text, "class text");
  return matmul(image_emb, transpose(class_text));
}

}  // namespace

Tensor text_context(const Tensor& class_text) { return mean_rows(class_text); }

Tensor fuse(const Tensor& tokens, const Tensor& t_ctx, const Tensor& text_weight) {
  if (tokens.rank() != 2 || t_ctx.numel() != tokens.dim(1)) {
    throw Error(ErrorKind::ShapeMismatch, "fuse: tokens " + shape_str(tokens.shape()) + " with context " +
                                              shape_str(t_ctx.shape()));
  }
  const std::size_t d = tokens.dim(1);
  const Tensor shift = reshape(matmul(reshape(t_ctx, {1, d}), text_weight), {d});
  return add_rows(tokens, shift);
}

Tensor fuse(const Tensor& tokens, const Tensor& t_ctx, const ModelParams& params) {
  return fuse(tokens, t_ctx, params.at("fusion.text_weight"));
}

Tensor classify(const Tensor& fused, const Tensor& weight, const Tensor& bias) {
  const std::size_t d = fused.dim(1);
  const Tensor pooled = reshape(mean_rows(fused), {1, d});
  return add(reshape(matmul(pooled, weight), {weight.dim(1)}), bias);
}

Tensor classify(const Tensor& fused, const ModelParams& params) {
  return classify(fused, params.at("head.weight"), params.at("head.bias"));
}

Tensor contrastive_loss(const Tensor& image_emb, const Tensor& class_text, std::span<const std::size_t> labels,
                        double temperature) {
  const Tensor logits = scale(similarity_logits(image_emb, class_text, labels), 1.0 / temperature);
  return softmax_cross_entropy(logits, labels);
}

Tensor contrastive_loss(const Tensor& image_emb, const Tensor& class_text, std::span<const std::size_t> labels,
                        const Tensor& log_scale) {
  const Tensor factor = exp(clamp(log_scale, kMinLogScale, kMaxLogScale));
  const Tensor logits = scale_by(similarity_logits(image_emb, class_text, labels), factor);
  return softmax_cross_entropy(logits, labels);
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels) {
  return softmax_cross_entropy(logits, labels);
}

Tensor cross_entropy(const Tensor& logits, std::size_t label) {
  const std::size_t labels[1] = {label};
  return softmax_cross_entropy(logits, labels);
}

LossBreakdown composite_loss(double l_contrastive, double l_ce, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw Error(ErrorKind::LambdaOutOfRange, "lambda " + std::to_string(lambda) + " outside [0, 1]");
  }
  return {l_contrastive, l_ce, lambda * l_contrastive + (1.0 - lambda) * l_ce, lambda};
}

CompositeLoss composite_loss(const Tensor& l_contrastive, const Tensor& l_ce, double lambda) {
  const LossBreakdown parts = composite_loss(l_contrastive.item(), l_ce.item(), lambda);
  Tensor total = add(scale(l_contrastive, lambda), scale(l_ce, 1.0 - lambda));
  return {std::move(total), parts};
}

CompositeLoss model_loss(const ModelParams& params, std::span<const Image> images,
                         std::span<const std::size_t> labels, double lambda) {
  if (images.size() != labels.size() || images.empty()) {
    throw Error(ErrorKind::ShapeMismatch, "model_loss: " + std::to_string(images.size()) + " images, " +
                                              std::to_string(labels.size()) + " labels");
  }
  const Tensor class_text = text_matrix(params);
  const Tensor t_ctx = text_context(class_text);
  std::vector<Tensor> embeddings, logits;
  embeddings.reserve(images.size());
  logits.reserve(images.size());
  for (const Image& image : images) {
    const Tensor tokens = vit_encode(params, image);
    embeddings.push_back(pool_project(params, tokens));
    logits.push_back(classify(fuse(tokens, t_ctx, params), params));
  }
  const Tensor l_c = contrastive_loss(stack_rows(embeddings), class_text, labels, params.at("logit_scale"));
  const Tensor l_e = cross_entropy(stack_rows(logits), labels);
  return composite_loss(l_c, l_e, lambda);
}

Tensor fused_feature(const ModelParams& params, const Image& image) {
  NoGradGuard no_grad;
  const Tensor t_ctx = text_context(text_matrix(params));
  return mean_rows(fuse(vit_encode(params, image), t_ctx, params));
}

}  // namespace medfocus
