#include "pm/annf/diagnostics.hpp"

#include <cmath>
#include <numeric>

namespace pm {

std::uint64_t Histogram::total() const { return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0}); }
std::uint64_t Histogram2D::total() const {
    return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

Histogram coherence_histogram(const Nnf& f, int bins) {
    if (bins < 1) throw InvalidArgument("histogram needs at least one bin");
    Histogram h{std::vector<std::uint64_t>(std::size_t(bins), 0)};
    const Rect src = f.source_rect();
    auto offset = [&](Point z) { return f[z].target - z; };
    auto add = [&](Point a, Point b) {
        const Point d = offset(a) - offset(b);
        const double dist = std::hypot(double(d.x), double(d.y));
        const int bin = std::min(bins - 1, int(std::floor(dist)));
        ++h.counts[std::size_t(bin)];
    };
    for (int y = src.y0; y < src.y1; ++y) {
        for (int x = src.x0; x < src.x1; ++x) {
            if (x + 1 < src.x1) add({x, y}, {x + 1, y});
            if (y + 1 < src.y1) add({x, y}, {x, y + 1});
        }
    }
    return h;
}

Histogram2D improvement_histogram(const ImageBuffer& A, const ImageBuffer& B, const Nnf& f, DistanceBand band,
                                  const ImprovementHistogramOptions& options) {
    if (!(band.low < band.high)) throw InvalidArgument("empty distance band");
    if (options.cell < 1 || options.half_extent < 0 || options.stride < 1)
        throw InvalidArgument("invalid histogram options");
    Histogram2D h;
    h.half_extent = options.half_extent;
    h.cell = options.cell;
    const int half_cells = options.half_extent / options.cell;
    h.side = 2 * half_cells + 1;
    h.counts.assign(std::size_t(h.side) * std::size_t(h.side), 0);

    const Rect src = f.source_rect();
    const Rect dst = f.target_rect();
    const int p = f.geom().size();
    auto cell_of = [&](int d) {
        // Cells are centered on zero: [-cell/2, cell/2] maps to the center.
        return int(std::floor((double(d) + 0.5 * options.cell) / options.cell)) + half_cells;
    };
    for (std::size_t i = 0; i < src.area(); i += std::size_t(options.stride)) {
        const Point z = src.at(i);
        const NnfEntry cur = f[z];
        if (!(cur.dist >= band.low && cur.dist < band.high)) continue;
        for (int ty = dst.y0; ty < dst.y1; ++ty) {
            for (int tx = dst.x0; tx < dst.x1; ++tx) {
                const double d = ssd_unchecked(A, z, B, {tx, ty}, p, cur.dist);
                if (!(d < cur.dist)) continue;
                const int dx = tx - cur.target.x;
                const int dy = ty - cur.target.y;
                if (std::abs(dx) > options.half_extent || std::abs(dy) > options.half_extent) continue;
                const int gx = cell_of(dx), gy = cell_of(dy);
                if (gx < 0 || gy < 0 || gx >= h.side || gy >= h.side) continue;
                ++h.counts[std::size_t(gy) * std::size_t(h.side) + std::size_t(gx)];
            }
        }
    }
    return h;
}

}  // namespace pm
