#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include "pm/core/geometry.hpp"

namespace pm {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// Sum of squared sample differences between the patches centered at `a` in A
/// and `b` in B. No bounds checks. Once the running sum reaches `bound` the
/// partial sum is returned; callers only compare the result against `bound`.
inline double ssd_unchecked(const ImageBuffer& A, Point a, const ImageBuffer& B, Point b, int patch,
                            double bound = kInfinity) {
    const int h = patch / 2;
    const int row_len = patch * A.channels();
    double sum = 0.0;
    for (int dy = -h; dy <= h; ++dy) {
        const float* ra = A.pixel(a.x - h, a.y + dy);
        const float* rb = B.pixel(b.x - h, b.y + dy);
        for (int i = 0; i < row_len; ++i) {
            const double d = double(ra[i]) - double(rb[i]);
            sum += d * d;
        }
        if (sum >= bound) return sum;
    }
    return sum;
}

/// Checked patch SSD. Throws InvalidArgument when either center lies outside
/// its image's valid rectangle or the channel counts differ.
double patch_distance(const ImageBuffer& A, Point a, const ImageBuffer& B, Point b,
                      const PatchGeometry& geom, double early_stop = kInfinity);

/// SSD over two images; the default metric of the matching engines.
struct SsdMetric {
    const ImageBuffer* a = nullptr;
    const ImageBuffer* b = nullptr;
    int patch = PatchGeometry::kDefaultSize;

    double operator()(Point pa, Point pb, double bound) const {
        return ssd_unchecked(*a, pa, *b, pb, patch, bound);
    }
};

/// Per-pixel RMS of a patch SSD, in gray levels of an image scaled to [0, 1].
inline double rms_gray_levels(double ssd, const PatchGeometry& geom, int channels) {
    const double n = double(geom.area()) * channels;
    return 255.0 * std::sqrt(std::max(0.0, ssd) / n);
}

}  // namespace pm
