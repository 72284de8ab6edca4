#pragma once

// Self-matching k-NN that skips targets near the query.

#include <algorithm>
#include <cstdlib>

#include "pm/gpm/knn.hpp"

namespace pm::detail {

template <PatchMetric Metric>
KnnField self_knn(Extent e, const PatchGeometry& geom, int k, int exclusion, const Metric& metric,
                  const SearchParams& search) {
    KnnField f(e, e, geom, k, true);
    if (std::size_t(k) >= f.target_rect().area()) throw InvalidArgument("k exceeds the number of distinct targets");
    auto wrapped = [&](Point a, Point b, double bound) {
        if (std::max(std::abs(a.x - b.x), std::abs(a.y - b.y)) < exclusion) return kInfinity;
        return double(metric(a, b, bound));
    };
    KnnParams kp;
    kp.search = search;
    kp.k = k;
    init_random_knn(f, wrapped, search.seed, search.threads);
    for (int i = 0; i < search.iterations; ++i) sweep_knn(f, wrapped, kp, i);
    return f;
}

}  // namespace pm::detail
