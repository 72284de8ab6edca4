#pragma once

#include <algorithm>
#include <span>
#include <vector>

#include "pm/annf/engine.hpp"
#include "pm/core/image.hpp"

namespace pm {

/// k nearest neighbors per source coordinate. Each coordinate owns a
/// contiguous block of k entries kept as a max-heap on distance, so the root
/// is the worst stored neighbor.
class KnnField {
public:
    KnnField() = default;
    KnnField(Extent source, Extent target, PatchGeometry geom, int k, bool self_matching = false);

    int k() const { return k_; }
    bool self_matching() const { return self_matching_; }
    Extent source_extent() const { return source_; }
    Extent target_extent() const { return target_; }
    const PatchGeometry& geom() const { return geom_; }
    Rect source_rect() const { return geom_.valid_rect(source_); }
    Rect target_rect() const { return geom_.valid_rect(target_); }
    std::size_t size() const { return source_rect().area(); }

    std::span<NnfEntry> heap(std::size_t i) { return {entries_.data() + i * std::size_t(k_), std::size_t(k_)}; }
    std::span<const NnfEntry> heap(std::size_t i) const {
        return {entries_.data() + i * std::size_t(k_), std::size_t(k_)};
    }
    std::span<NnfEntry> heap(Point p) { return heap(source_rect().index(p)); }
    std::span<const NnfEntry> heap(Point p) const { return heap(source_rect().index(p)); }
    const NnfEntry& root(std::size_t i) const { return entries_[i * std::size_t(k_)]; }

    std::vector<NnfEntry>& entries() { return entries_; }
    const std::vector<NnfEntry>& entries() const { return entries_; }

    /// Entries of one coordinate sorted by ascending distance.
    std::vector<NnfEntry> sorted(std::size_t i) const;
    /// Mean over coordinates of the mean stored distance.
    double mean_distance() const;
    std::size_t memory_bytes() const { return entries_.size() * sizeof(NnfEntry); }

    friend bool operator==(const KnnField&, const KnnField&) = default;

private:
    Extent source_;
    Extent target_;
    PatchGeometry geom_;
    int k_ = 0;
    bool self_matching_ = false;
    std::vector<NnfEntry> entries_;
};

namespace knn_heap {

inline bool by_dist(const NnfEntry& a, const NnfEntry& b) { return a.dist < b.dist; }

inline bool contains(std::span<const NnfEntry> h, Point t) {
    return std::any_of(h.begin(), h.end(), [&](const NnfEntry& e) { return e.target == t; });
}

/// Replaces the root with {t, d} when d is strictly below the root distance
/// and t is not stored yet.
inline bool offer(std::span<NnfEntry> h, Point t, double d) {
    if (!(d < h.front().dist) || contains(h, t)) return false;
    std::pop_heap(h.begin(), h.end(), by_dist);
    h.back() = {t, d};
    std::push_heap(h.begin(), h.end(), by_dist);
    return true;
}

/// Evaluates candidate t against the heap (dedup first, then bounded distance).
template <PatchMetric Metric>
inline bool try_offer(std::span<NnfEntry> h, Point z, Point t, const Metric& metric, bool early_stop,
                      std::size_t& evaluations) {
    if (contains(h, t)) return false;
    ++evaluations;
    const double bound = h.front().dist;
    const double d = metric(z, t, early_stop ? bound : kInfinity);
    if (!(d < bound)) return false;
    std::pop_heap(h.begin(), h.end(), by_dist);
    h.back() = {t, d};
    std::push_heap(h.begin(), h.end(), by_dist);
    return true;
}

}  // namespace knn_heap

struct KnnParams {
    SearchParams search;
    int k = 4;
    /// Random-search sequences run around each stored neighbor per visit.
    int samples_per_neighbor = 1;

    void validate() const;
};

/// k distinct uniform targets per coordinate.
template <PatchMetric Metric>
void init_random_knn(KnnField& f, const Metric& metric, std::uint64_t seed, int threads = 1) {
    const Rect src = f.source_rect();
    const Rect dst = f.target_rect();
    if (std::size_t(f.k()) > dst.area()) throw InvalidArgument("k exceeds the number of distinct targets");
    parallel_rows(src.y0, src.y1, threads, [&](int y) {
        for (int x = src.x0; x < src.x1; ++x) {
            const Point z{x, y};
            auto h = f.heap(z);
            CounterRng rng(seed, std::uint64_t(x), std::uint64_t(y), detail::kInitStream);
            for (int j = 0; j < f.k(); ++j) {
                Point t = dst.at(rng.below(dst.area()));
                while (knn_heap::contains(h.first(std::size_t(j)), t)) t = dst.at(rng.below(dst.area()));
                h[std::size_t(j)] = {t, metric(z, t, kInfinity)};
            }
            std::make_heap(h.begin(), h.end(), knn_heap::by_dist);
        }
    });
}

/// One k-NN sweep: every stored neighbor of each scan neighbor is propagated,
/// then an exponential random search runs around each stored neighbor.
template <PatchMetric Metric>
SweepStats sweep_knn(KnnField& f, const Metric& metric, const KnnParams& params, int sweep) {
    const SearchParams& sp = params.search;
    const Rect src = f.source_rect();
    const Rect dst = f.target_rect();
    const std::size_t k = std::size_t(f.k());
    const int step = sweep % 2 == 0 ? 1 : -1;
    const double w = sp.radius_for(f.target_extent());
    const auto strips = make_strips(src.y0, src.y1, sp.threads);

    std::vector<std::vector<NnfEntry>> snapshot(strips.size());
    for (const Strip& s : strips) {
        const int row = step > 0 ? s.begin - 1 : s.end;
        if (row < src.y0 || row >= src.y1) continue;
        auto& snap = snapshot[std::size_t(s.index)];
        for (int x = src.x0; x < src.x1; ++x) {
            const auto h = f.heap(Point{x, row});
            snap.insert(snap.end(), h.begin(), h.end());
        }
    }

    std::vector<SweepStats> per(strips.size());
    run_strips(strips, [&](const Strip& s) {
        SweepStats& st = per[std::size_t(s.index)];
        const auto& snap = snapshot[std::size_t(s.index)];
        std::vector<Point> anchors(k);
        const int y0 = step > 0 ? s.begin : s.end - 1, y1 = step > 0 ? s.end : s.begin - 1;
        const int x0 = step > 0 ? src.x0 : src.x1 - 1, x1 = step > 0 ? src.x1 : src.x0 - 1;
        for (int y = y0; y != y1; y += step) {
            for (int x = x0; x != x1; x += step) {
                const Point z{x, y};
                auto h = f.heap(z);
                bool improved = false;
                for (const Point d : {Point{step, 0}, Point{0, step}}) {
                    const Point n = z - d;
                    if (!src.contains(n)) continue;
                    const NnfEntry* nh = (n.y < s.begin || n.y >= s.end)
                                             ? snap.data() + std::size_t(n.x - src.x0) * k
                                             : f.heap(n).data();
                    for (std::size_t j = 0; j < k; ++j)
                        improved |= knn_heap::try_offer(h, z, detail::shift_candidate(nh[j].target, d, dst), metric,
                                                        sp.early_stop, st.evaluations);
                }

                for (std::size_t j = 0; j < k; ++j) anchors[j] = h[j].target;
                CounterRng rng(sp.seed, std::uint64_t(x), std::uint64_t(y), std::uint64_t(sweep),
                               detail::kSearchStream);
                for (const Point v0 : anchors) {
                    for (int n = 0; n < params.samples_per_neighbor; ++n) {
                        for (double radius = w; radius >= 1.0; radius *= sp.alpha) {
                            const double rx = rng.uniform(-1.0, 1.0), ry = rng.uniform(-1.0, 1.0);
                            const Point u = dst.clamp(detail::random_offset_candidate(v0, radius, rx, ry));
                            improved |= knn_heap::try_offer(h, z, u, metric, sp.early_stop, st.evaluations);
                        }
                    }
                }
                st.updates += improved;
            }
        }
    });
    SweepStats total;
    for (const auto& st : per) {
        total.updates += st.updates;
        total.evaluations += st.evaluations;
    }
    for (const auto& snap : snapshot) total.aux_bytes += snap.capacity() * sizeof(NnfEntry);
    return total;
}

struct KnnRunStats {
    std::vector<double> mean_distance_per_sweep;
    std::vector<double> seconds_per_sweep;
    std::size_t peak_aux_bytes = 0;
};

KnnField init_random_knn(const ImageBuffer& A, const ImageBuffer& B, const PatchGeometry& geom,
                         const KnnParams& params);
SweepStats iterate_knn(KnnField& f, const ImageBuffer& A, const ImageBuffer& B, const KnnParams& params, int sweep);
KnnField compute_knn(const ImageBuffer& A, const ImageBuffer& B, const PatchGeometry& geom, const KnnParams& params,
                     KnnRunStats* stats = nullptr);
/// Exact k nearest neighbors by exhaustive scan.
KnnField brute_force_knn(const ImageBuffer& A, const ImageBuffer& B, const PatchGeometry& geom, int k);
/// The best stored neighbor of each coordinate as a plain field.
Nnf best_of(const KnnField& f);

std::vector<std::uint8_t> encode_knn(const KnnField& f);
KnnField decode_knn(std::span<const std::uint8_t> bytes, Extent target, bool self_matching = false);
void write_knn(const std::string& path, const KnnField& f);
KnnField read_knn(const std::string& path, Extent target, bool self_matching = false);

}  // namespace pm
