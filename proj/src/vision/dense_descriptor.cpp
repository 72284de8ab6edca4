#include "pm/vision/dense_descriptor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "pm/core/error.hpp"

namespace pm {

DescriptorField dense_descriptor(const ImageBuffer& img, const PatchGeometry& geom) {
    if (geom.valid_rect(img).empty()) throw InvalidArgument("image smaller than patch");
    const ImageBuffer g = to_gray(img);
    const int W = g.width(), H = g.height();
    std::vector<float> mag(g.pixel_count()), bin_of(g.pixel_count());  // bin_of: angle in bin units
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const double gx = 0.5 * (g.at(std::min(x + 1, W - 1), y, 0) - g.at(std::max(x - 1, 0), y, 0));
            const double gy = 0.5 * (g.at(x, std::min(y + 1, H - 1), 0) - g.at(x, std::max(y - 1, 0), 0));
            const std::size_t i = std::size_t(y) * std::size_t(W) + std::size_t(x);
            mag[i] = float(std::hypot(gx, gy));
            double a = std::atan2(gy, gx);
            if (a < 0) a += 2 * std::numbers::pi;
            bin_of[i] = float(a / (2 * std::numbers::pi) * kDenseBins);
        }

    DescriptorField out(img.extent(), geom, kDenseCells * kDenseCells * kDenseBins);
    const Rect r = out.valid_rect();
    const int h = geom.half(), p = geom.size();
    for (std::size_t k = 0; k < r.area(); ++k) {
        const Point z = r.at(k);
        auto d = out.at(z);
        for (int dy = 0; dy < p; ++dy) {
            const int cy = dy * kDenseCells / p;
            for (int dx = 0; dx < p; ++dx) {
                const int cx = dx * kDenseCells / p;
                const std::size_t i = std::size_t(z.y - h + dy) * std::size_t(W) + std::size_t(z.x - h + dx);
                // Linear interpolation between the two nearest orientation
                // bins keeps the descriptor continuous in the gradient angle.
                const double pos = bin_of[i] - 0.5;
                const double lo = std::floor(pos), frac = pos - lo;
                const int b0 = (int(lo) + kDenseBins) % kDenseBins, b1 = (b0 + 1) % kDenseBins;
                float* cell = d.data() + (cy * kDenseCells + cx) * kDenseBins;
                cell[b0] += float((1 - frac) * mag[i]);
                cell[b1] += float(frac * mag[i]);
            }
        }
        double norm = 0;
        for (const float v : d) norm += double(v) * v;
        // Tiny magnitudes are rounding noise of flat regions.
        if (norm < 1e-16) {
            std::fill(d.begin(), d.end(), 0.0f);
            continue;
        }
        const double inv = 1.0 / std::sqrt(norm);
        for (float& v : d) v = float(v * inv);
    }
    return out;
}

}  // namespace pm
