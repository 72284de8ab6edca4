#pragma once

#include <cstdint>
#include <vector>

#include "pm/annf/nnf.hpp"
#include "pm/core/image.hpp"

namespace pm {

struct Histogram {
    std::vector<std::uint64_t> counts;

    std::uint64_t total() const;
};

/// Distribution of |offset(z) - offset(z')| over horizontally and vertically
/// adjacent coordinates z, z'. Bin b counts distances in [b, b + 1); bin 0 is
/// perfect coherence. Larger distances land in the last bin.
Histogram coherence_histogram(const Nnf& f, int bins = 32);

struct DistanceBand {
    double low = 0.0;
    double high = 0.0;
};

struct ImprovementHistogramOptions {
    /// Half width of the grid in pixels; offsets beyond it are dropped.
    int half_extent = 32;
    /// Grid cell size in pixels.
    int cell = 4;
    /// Every `stride`-th coordinate (raster order) is examined.
    int stride = 1;
};

/// Centered 2-D grid of (cell = (2 * half_extent / cell + 1)^2 bins).
struct Histogram2D {
    int half_extent = 0;
    int cell = 1;
    int side = 0;
    std::vector<std::uint64_t> counts;

    std::uint64_t at(int gx, int gy) const { return counts[std::size_t(gy) * std::size_t(side) + std::size_t(gx)]; }
    std::uint64_t total() const;
};

/// For sampled coordinates whose current distance lies in [band.low,
/// band.high), accumulates the position relative to the current target of
/// every strictly better target found by exhaustive scan.
Histogram2D improvement_histogram(const ImageBuffer& A, const ImageBuffer& B, const Nnf& f, DistanceBand band,
                                  const ImprovementHistogramOptions& options = {});

}  // namespace pm
