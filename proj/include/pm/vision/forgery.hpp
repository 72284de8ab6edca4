#pragma once

#include <vector>

#include "pm/annf/nnf.hpp"
#include "pm/core/image.hpp"

namespace pm {

struct ForgeryParams {
    int k = 16;
    /// Neighbor offsets of adjacent coordinates agree within this many px.
    double offset_agreement = 1.5;
    /// Only neighbors closer than this (SSD per sample) count.
    double max_patch_dist = 2.5e-4;
    /// Smallest reported region, in pixels.
    int min_region = 400;
    /// Neighbors within this Chebyshev distance of the query are skipped;
    /// 0 selects the patch size.
    int self_exclusion_radius = 0;
    SearchParams search;

    void validate() const;
};

struct ForgeryRegion {
    /// One byte per image pixel, nonzero inside the region.
    std::vector<std::uint8_t> mask;
    std::size_t area = 0;
    /// Median offset from the region to its copy.
    Point offset;
};

/// Offsets of the agreeing (close enough) neighbors of one coordinate.
using NeighborOffsets = std::vector<Point>;

/// The agreement predicate of two adjacent coordinates: both offset sets are
/// nonempty and every offset of each has a partner in the other within `tol`.
bool offsets_agree(const NeighborOffsets& a, const NeighborOffsets& b, double tol);

/// Copy-move detection: connected components of the graph whose edges join
/// 4-adjacent patch centers with agreeing neighbor offsets. Each component
/// with at least `min_region` covered pixels is returned as the union of its
/// patches. Both the original and the pasted copy are reported.
std::vector<ForgeryRegion> detect_copy_move(const ImageBuffer& img, const PatchGeometry& geom,
                                            const ForgeryParams& params = {});

}  // namespace pm
