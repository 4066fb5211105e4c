#pragma once

#include <array>
#include <cstdint>

#include "medfocus/segmenter/image.hpp"

namespace medfocus {

using Histogram = std::array<std::uint64_t, 256>;

Histogram histogram(const Image& gray);

/// Otsu threshold: the t in [0, 255] maximizing the between-class variance of
/// {v <= t} vs {v > t}, compared exactly in integer arithmetic; ties go to the
/// smaller t. Throws NoContrast when fewer than two bins are occupied.
/// Total count must stay below 2^32.
int otsu_threshold(const Histogram& hist);

/// Pixels strictly above `threshold` become foreground.
Mask binarize(const Image& gray, int threshold);

/// Keeps the largest 4-connected foreground component. Among equal sizes the
/// component whose first pixel comes first in raster order wins.
/// Throws EmptyMask when there is no foreground.
Mask largest_component(const Mask& mask);

/// Square structuring element of side 2r+1; neighbours outside the raster are
/// ignored.
Mask dilate(const Mask& mask, int radius);
Mask erode(const Mask& mask, int radius);
/// Dilation then erosion. Radius 0 is the identity.
Mask morph_close(const Mask& mask, int radius);

struct SegmentConfig {
  int close_radius = 2;
};

/// Classical stand-in for a promptable segmenter:
/// histogram -> Otsu -> brighter class -> closing -> largest component.
Mask segment(const Image& image, const SegmentConfig& cfg = {});

}  // namespace medfocus
