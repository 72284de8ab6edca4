#include "pm/vision/forgery.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pm/core/distance.hpp"
#include "pm/core/error.hpp"
#include "self_knn.hpp"

namespace pm {

void ForgeryParams::validate() const {
    if (k < 1) throw InvalidArgument("k must be >= 1");
    if (!(offset_agreement > 0.0)) throw InvalidArgument("offset agreement threshold must be positive");
    if (!(max_patch_dist > 0.0)) throw InvalidArgument("maximum patch distance must be positive");
    if (min_region < 1) throw InvalidArgument("minimum region size must be >= 1");
    if (self_exclusion_radius < 0) throw InvalidArgument("self-exclusion radius must be >= 0");
    search.validate();
}

namespace {

bool covered(const NeighborOffsets& from, const NeighborOffsets& in, double tol) {
    const double tol2 = tol * tol;
    for (const Point o : from) {
        const bool found = std::any_of(in.begin(), in.end(), [&](Point p) {
            const double dx = p.x - o.x, dy = p.y - o.y;
            return dx * dx + dy * dy <= tol2;
        });
        if (!found) return false;
    }
    return true;
}

struct UnionFind {
    std::vector<std::size_t> parent;
    explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), std::size_t{0}); }
    std::size_t find(std::size_t i) {
        while (parent[i] != i) i = parent[i] = parent[parent[i]];
        return i;
    }
    void unite(std::size_t a, std::size_t b) {
        a = find(a), b = find(b);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
};

}  // namespace

bool offsets_agree(const NeighborOffsets& a, const NeighborOffsets& b, double tol) {
    return !a.empty() && !b.empty() && covered(a, b, tol) && covered(b, a, tol);
}

std::vector<ForgeryRegion> detect_copy_move(const ImageBuffer& img, const PatchGeometry& geom,
                                            const ForgeryParams& params) {
    params.validate();
    const Rect valid = geom.valid_rect(img);
    if (valid.empty()) throw InvalidArgument("image smaller than patch");
    const int exclusion = params.self_exclusion_radius > 0 ? params.self_exclusion_radius : geom.size();
    const SsdMetric metric{&img, &img, geom.size()};
    const KnnField knn = detail::self_knn(img.extent(), geom, params.k, exclusion, metric, params.search);

    const double max_ssd = params.max_patch_dist * double(geom.area()) * img.channels();
    std::vector<NeighborOffsets> offsets(valid.area());
    for (std::size_t i = 0; i < valid.area(); ++i) {
        const Point z = valid.at(i);
        for (const NnfEntry& e : knn.heap(i))
            if (e.dist < max_ssd) offsets[i].push_back(e.target - z);
    }

    UnionFind uf(valid.area());
    std::vector<std::uint8_t> has_edge(valid.area(), 0);
    for (std::size_t i = 0; i < valid.area(); ++i) {
        const Point z = valid.at(i);
        for (const Point d : {Point{1, 0}, Point{0, 1}}) {
            const Point n = z + d;
            if (!valid.contains(n)) continue;
            const std::size_t j = valid.index(n);
            if (!offsets_agree(offsets[i], offsets[j], params.offset_agreement)) continue;
            uf.unite(i, j);
            has_edge[i] = has_edge[j] = 1;
        }
    }

    // Group centers by component root.
    std::vector<std::vector<std::size_t>> members(valid.area());
    for (std::size_t i = 0; i < valid.area(); ++i)
        if (has_edge[i]) members[uf.find(i)].push_back(i);

    std::vector<ForgeryRegion> regions;
    const int W = img.width(), h = geom.half();
    for (const auto& comp : members) {
        if (comp.empty()) continue;
        ForgeryRegion r;
        r.mask.assign(img.pixel_count(), 0);
        std::vector<int> ox, oy;
        for (const std::size_t i : comp) {
            const Point z = valid.at(i);
            for (int dy = -h; dy <= h; ++dy)
                for (int dx = -h; dx <= h; ++dx) r.mask[std::size_t(z.y + dy) * std::size_t(W) + std::size_t(z.x + dx)] = 1;
            for (const Point o : offsets[i]) ox.push_back(o.x), oy.push_back(o.y);
        }
        r.area = std::size_t(std::count(r.mask.begin(), r.mask.end(), std::uint8_t{1}));
        if (r.area < std::size_t(params.min_region)) continue;
        std::nth_element(ox.begin(), ox.begin() + std::ptrdiff_t(ox.size() / 2), ox.end());
        std::nth_element(oy.begin(), oy.begin() + std::ptrdiff_t(oy.size() / 2), oy.end());
        r.offset = {ox[ox.size() / 2], oy[oy.size() / 2]};
        regions.push_back(std::move(r));
    }
    std::sort(regions.begin(), regions.end(), [](const ForgeryRegion& a, const ForgeryRegion& b) { return a.area > b.area; });
    return regions;
}

}  // namespace pm
