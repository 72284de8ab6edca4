#include "pm/search_ops/enrichment.hpp"

#include <chrono>

namespace pm {

namespace {

void require_square(const KnnField& f) {
    if (!(f.source_extent() == f.target_extent()))
        throw InvalidArgument("enrichment needs a field whose source and target coincide");
}

}  // namespace

KnnField forward_enrichment(const KnnField& f, const ImageBuffer& A, bool early_stop) {
    if (!f.self_matching()) throw InvalidArgument("forward enrichment requires a self-matching field");
    require_square(f);
    if (!(A.extent() == f.source_extent())) throw InvalidArgument("image does not match the field");
    KnnField out = f;
    const Rect src = f.source_rect();
    const SsdMetric metric{&A, &A, f.geom().size()};
    // stamp[t] == i + 1 marks target t as already stored or evaluated while
    // visiting coordinate i, so each distinct candidate costs one distance.
    std::vector<std::uint32_t> stamp(src.area(), 0);
    for (std::size_t i = 0; i < f.size(); ++i) {
        const Point a = src.at(i);
        const auto mark = std::uint32_t(i + 1);
        auto h = out.heap(i);
        for (const NnfEntry& e : h) stamp[src.index(e.target)] = mark;
        for (const NnfEntry& b : f.heap(i)) {
            for (const NnfEntry& c : f.heap(src.index(b.target))) {
                std::uint32_t& s = stamp[src.index(c.target)];
                if (s == mark) continue;
                s = mark;
                const double bound = h.front().dist;
                const double d = metric(a, c.target, early_stop ? bound : kInfinity);
                if (!(d < bound)) continue;
                std::pop_heap(h.begin(), h.end(), knn_heap::by_dist);
                h.back() = {c.target, d};
                std::push_heap(h.begin(), h.end(), knn_heap::by_dist);
            }
        }
    }
    return out;
}

std::vector<std::vector<std::uint32_t>> inverse_lists(const KnnField& f) {
    const Rect dst = f.target_rect();
    std::vector<std::vector<std::uint32_t>> inv(dst.area());
    for (std::size_t i = 0; i < f.size(); ++i)
        for (const NnfEntry& e : f.heap(i)) inv[dst.index(e.target)].push_back(std::uint32_t(i));
    return inv;
}

KnnField inverse_enrichment(const KnnField& f, const ImageBuffer* A) {
    require_square(f);
    KnnField out = f;
    const Rect src = f.source_rect();
    const auto inv = inverse_lists(f);
    for (std::size_t b = 0; b < inv.size(); ++b) {
        if (inv[b].empty()) continue;
        auto h = out.heap(b);
        const Point pb = src.at(b);
        for (const std::uint32_t a : inv[b]) {
            const Point pa = src.at(a);
            if (knn_heap::contains(h, pa)) continue;
            double d;
            if (A) {
                d = ssd_unchecked(*A, pb, *A, pa, f.geom().size(), h.front().dist);
            } else {
                d = kInfinity;
                for (const NnfEntry& e : f.heap(a))
                    if (e.target == pb) d = e.dist;
            }
            knn_heap::offer(h, pa, d);
        }
    }
    return out;
}

KnnField compute_knn_enriched(const ImageBuffer& A, const PatchGeometry& geom, const KnnParams& params,
                              EnrichmentSchedule schedule, KnnRunStats* stats) {
    KnnField f = init_random_knn(A, A, geom, params);
    const SsdMetric metric{&A, &A, geom.size()};
    for (int i = 0; i < params.search.iterations; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        const SweepStats s = sweep_knn(f, metric, params, i);
        if (schedule == EnrichmentSchedule::Inverse || schedule == EnrichmentSchedule::InverseThenForward)
            f = inverse_enrichment(f);
        if (schedule == EnrichmentSchedule::Forward || schedule == EnrichmentSchedule::InverseThenForward)
            f = forward_enrichment(f, A, params.search.early_stop);
        if (stats) {
            stats->seconds_per_sweep.push_back(
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
            stats->mean_distance_per_sweep.push_back(f.mean_distance());
            // Enrichment holds one extra copy of the field.
            const std::size_t extra = schedule == EnrichmentSchedule::None ? 0 : f.memory_bytes();
            stats->peak_aux_bytes = std::max(stats->peak_aux_bytes, f.memory_bytes() + s.aux_bytes + extra);
        }
    }
    return f;
}

}  // namespace pm
