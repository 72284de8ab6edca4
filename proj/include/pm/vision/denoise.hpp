#pragma once

#include "pm/annf/nnf.hpp"
#include "pm/core/image.hpp"

namespace pm {

struct DenoiseParams {
    int k = 16;
    /// Bandwidth of the weight exp(-d / h^2), where d is the patch SSD per
    /// sample (squared intensity units of a [0, 1] image).
    double h = 0.1;
    /// Count each pixel's own patch as a neighbor at distance 0.
    bool include_self = true;
    SearchParams search;

    void validate() const;
};

/// Non-local means over each patch's k nearest neighbors in the same image.
/// Pixels near the border reuse the neighbors of the closest valid center,
/// displaced by the same amount.
ImageBuffer nlm_denoise(const ImageBuffer& img, const PatchGeometry& geom, const DenoiseParams& params = {});

}  // namespace pm
