#pragma once

#include <vector>

#include "pm/core/image.hpp"

namespace pm {

/// Area-weighted (box filter) resampling to an arbitrary size. Each output
/// sample is the mean of the input area it covers, so a uniform image stays
/// uniform and total mass scales with the area ratio.
ImageBuffer resize_area(const ImageBuffer& img, int width, int height);

/// Bilinear resampling with pixel centers aligned; used for enlarging.
ImageBuffer resize_bilinear(const ImageBuffer& img, int width, int height);

/// Coarse-to-fine pyramid, coarsest first, full resolution last. Level k has
/// dimensions round(full * factor^(n-1-k)); the coarsest level is the smallest
/// one whose shorter side is still >= min_dim.
std::vector<ImageBuffer> build_pyramid(const ImageBuffer& img, double factor, int min_dim);

/// Level dimensions only, coarsest first, with the same rule as build_pyramid.
std::vector<Extent> pyramid_extents(Extent full, double factor, int min_dim);

}  // namespace pm
