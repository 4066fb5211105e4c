#pragma once

#include <cstddef>

#include "medfocus/encoders/model.hpp"
#include "medfocus/segmenter/image.hpp"

namespace medfocus {

/// [(H W / p^2) x (p^2 c)], patches in row-major order, pixels scaled to [0, 1].
/// Within a patch values run row by row, channels interleaved.
Tensor patchify(const Image& image, std::size_t patch_size);
/// Inverse of patchify (values rounded back to 8 bits).
Image unpatchify(const Tensor& patches, std::size_t patch_size, std::size_t width, std::size_t height,
                 std::size_t channels);

/// Image encoder over pre-patchified input; returns the [n x d] token matrix
/// with the CLS token in row 0.
Tensor vit_encode_patches(const ModelParams& params, const Tensor& patches);
Tensor vit_encode(const ModelParams& params, const Image& image);

/// l2_normalize(CLS row of I projected by image_proj), shape [d].
Tensor pool_project(const ModelParams& params, const Tensor& tokens);

/// l2_normalize(text embedding row projected by text.proj), shape [d].
Tensor text_encode(const ModelParams& params, std::size_t class_id);
/// All class embeddings stacked, [C x d].
Tensor text_matrix(const ModelParams& params);

}  // namespace medfocus
