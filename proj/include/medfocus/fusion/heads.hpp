#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "medfocus/encoders/model.hpp"
#include "medfocus/segmenter/image.hpp"

namespace medfocus {

/// Label-free text context: the mean of the class embeddings T [C x d] -> [d].
Tensor text_context(const Tensor& class_text);

/// M = I + (t_ctx W_t) added to every token row. Same shape as `tokens`.
Tensor fuse(const Tensor& tokens, const Tensor& t_ctx, const Tensor& text_weight);
Tensor fuse(const Tensor& tokens, const Tensor& t_ctx, const ModelParams& params);

/// Logits y = meanpool_rows(M) W_c + b_c, shape [C].
Tensor classify(const Tensor& fused, const Tensor& weight, const Tensor& bias);
Tensor classify(const Tensor& fused, const ModelParams& params);

/// Class-anchored contrastive loss: mean over the batch of
/// cross_entropy(z_I T^T * scale, label). Rows of `image_emb` [B x d] and
/// `class_text` [C x d] must be unit norm within 1e-6 (NonNormalizedInput).
Tensor contrastive_loss(const Tensor& image_emb, const Tensor& class_text, std::span<const std::size_t> labels,
                        double temperature);
/// Learned variant: scale = exp(clamp(log_scale, ln(1/100), ln 100)).
Tensor contrastive_loss(const Tensor& image_emb, const Tensor& class_text, std::span<const std::size_t> labels,
                        const Tensor& log_scale);

/// -log softmax(logits)[label], averaged when logits is [B x C].
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels);
Tensor cross_entropy(const Tensor& logits, std::size_t label);

struct LossBreakdown {
  double l_contrastive = 0.0;
  double l_ce = 0.0;
  double l_total = 0.0;
  double lambda = 0.5;
};

struct CompositeLoss {
  Tensor total;
  LossBreakdown parts;
};

/// L = lambda * L_c + (1 - lambda) * L_e. Throws LambdaOutOfRange outside [0, 1].
CompositeLoss composite_loss(const Tensor& l_contrastive, const Tensor& l_ce, double lambda);
LossBreakdown composite_loss(double l_contrastive, double l_ce, double lambda);

/// Full objective over a batch: encode each image, fuse with the label-free
/// text context, classify, then combine both losses.
CompositeLoss model_loss(const ModelParams& params, std::span<const Image> images,
                         std::span<const std::size_t> labels, double lambda);

/// Frozen feature of one image: meanpool_rows(M), shape [d]. Records no graph.
Tensor fused_feature(const ModelParams& params, const Image& image);

}  // namespace medfocus
