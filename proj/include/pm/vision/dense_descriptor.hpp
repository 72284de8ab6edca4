#pragma once

#include "pm/gpm/descriptor.hpp"

namespace pm {

inline constexpr int kDenseCells = 4;
inline constexpr int kDenseBins = 8;

/// Per patch center: 8-bin gradient-orientation histograms (magnitude
/// weighted) over a 4 x 4 grid of cells covering the patch, concatenated and
/// L2-normalized. A patch without gradient maps to the zero vector.
DescriptorField dense_descriptor(const ImageBuffer& img, const PatchGeometry& geom);

}  // namespace pm
