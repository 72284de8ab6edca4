#pragma once

// Translation matching engine, generic over the patch metric. A metric is any
// callable `double(Point source, Point target, double bound)` that returns the
// exact distance when it is below `bound` and any value >= bound otherwise.

#include <cmath>
#include <concepts>
#include <vector>

#include "pm/annf/nnf.hpp"
#include "pm/core/parallel.hpp"
#include "pm/core/rng.hpp"

namespace pm {

template <class M>
concept PatchMetric = requires(const M& m, Point a, Point b, double bound) {
    { m(a, b, bound) } -> std::convertible_to<double>;
};

enum class ScanDirection { Forward, Backward };

inline ScanDirection direction_of_sweep(int sweep) {
    return sweep % 2 == 0 ? ScanDirection::Forward : ScanDirection::Backward;
}

namespace detail {

// Stream tags keep the per-coordinate generators of different phases apart.
inline constexpr std::uint64_t kInitStream = 0x1717;
inline constexpr std::uint64_t kSearchStream = 0x5e5e;

inline Point shift_candidate(Point neighbor_target, Point delta, const Rect& target_rect) {
    return target_rect.clamp(neighbor_target + delta);
}

inline Point random_offset_candidate(Point v0, double radius, double rx, double ry) {
    return {v0.x + int(std::lround(radius * rx)), v0.y + int(std::lround(radius * ry))};
}

// Draws a target admissible for `source`; falls back to a scan from a random
// starting point when rejection sampling fails.
inline Point draw_target(CounterRng& rng, Point source, const Rect& target_rect,
                         const MatchConstraints* c) {
    const std::size_t n = target_rect.area();
    if (!c || !c->allow) return target_rect.at(rng.below(n));
    for (int attempt = 0; attempt < 64; ++attempt) {
        const Point t = target_rect.at(rng.below(n));
        if (c->allows(source, t)) return t;
    }
    const std::size_t start = rng.below(n);
    for (std::size_t k = 0; k < n; ++k) {
        const Point t = target_rect.at((start + k) % n);
        if (c->allows(source, t)) return t;
    }
    throw ConstraintError("no admissible match target for a constrained patch");
}

}  // namespace detail

/// Uniform random initialization. Pinned entries keep their current value
/// but get their distance recomputed.
template <PatchMetric Metric>
void init_random_field(Nnf& f, const Metric& metric, std::uint64_t seed, const MatchConstraints* c = nullptr,
                       int threads = 1) {
    const Rect src = f.source_rect();
    const Rect dst = f.target_rect();
    if (src.empty() || dst.empty()) throw InvalidArgument("image smaller than patch");
    parallel_rows(src.y0, src.y1, threads, [&](int y) {
        for (int x = src.x0; x < src.x1; ++x) {
            const Point z{x, y};
            const std::size_t i = src.index(z);
            NnfEntry& e = f.entries()[i];
            if (!(c && c->is_pinned(i))) {
                CounterRng rng(seed, std::uint64_t(x), std::uint64_t(y), detail::kInitStream);
                e.target = detail::draw_target(rng, z, dst, c);
            }
            e.dist = metric(z, e.target, kInfinity);
        }
    });
}

/// Recomputes every cached distance, e.g. after the images changed.
template <PatchMetric Metric>
void refresh_distances(Nnf& f, const Metric& metric, int threads = 1) {
    const Rect src = f.source_rect();
    parallel_rows(src.y0, src.y1, threads, [&](int y) {
        for (int x = src.x0; x < src.x1; ++x) {
            NnfEntry& e = f[{x, y}];
            e.dist = metric({x, y}, e.target, kInfinity);
        }
    });
}

/// Tests one candidate; replaces `best` on strict improvement.
template <PatchMetric Metric>
inline bool try_candidate(NnfEntry& best, Point z, Point cand, const Metric& metric, bool early_stop,
                          const MatchConstraints* c, std::size_t& evaluations) {
    if (cand == best.target) return false;
    if (c && !c->allows(z, cand)) return false;
    ++evaluations;
    const double d = metric(z, cand, early_stop ? best.dist : kInfinity);
    if (d < best.dist) {
        best = {cand, d};
        return true;
    }
    return false;
}

/// Exponential random search around the current match of `z`:
/// u_i = v0 + w * alpha^i * R_i, R_i uniform in [-1,1]^2, for all i with
/// w * alpha^i >= 1. Candidates are clamped to the target rectangle.
template <PatchMetric Metric>
bool random_search_entry(NnfEntry& best, Point z, const Rect& target_rect, const Metric& metric,
                         double w, double alpha, bool early_stop, CounterRng& rng,
                         const MatchConstraints* c, std::size_t& evaluations) {
    bool improved = false;
    const Point v0 = best.target;
    for (double radius = w; radius >= 1.0; radius *= alpha) {
        const double rx = rng.uniform(-1.0, 1.0);
        const double ry = rng.uniform(-1.0, 1.0);
        const Point u = target_rect.clamp(detail::random_offset_candidate(v0, radius, rx, ry));
        improved |= try_candidate(best, z, u, metric, early_stop, c, evaluations);
    }
    return improved;
}

/// One full propagation + random-search sweep. Even sweeps scan in raster
/// order and propagate from the left/top neighbor, odd sweeps scan in
/// reverse and propagate from the right/bottom neighbor. With several
/// threads the rows are split into strips; each strip reads rows owned by
/// other strips only from a snapshot taken at the start of the sweep.
template <PatchMetric Metric>
SweepStats sweep_field(Nnf& f, const Metric& metric, const SearchParams& params, int sweep,
                       const MatchConstraints* c = nullptr) {
    const Rect src = f.source_rect();
    const Rect dst = f.target_rect();
    const ScanDirection dir = direction_of_sweep(sweep);
    const int step = dir == ScanDirection::Forward ? 1 : -1;
    const double w = params.radius_for(f.target_extent());
    const auto strips = make_strips(src.y0, src.y1, params.threads);

    // Boundary rows owned by the neighboring strip, frozen at the barrier.
    std::vector<std::vector<NnfEntry>> snapshot(strips.size());
    for (const Strip& s : strips) {
        const int row = dir == ScanDirection::Forward ? s.begin - 1 : s.end;
        if (row < src.y0 || row >= src.y1) continue;
        auto& snap = snapshot[std::size_t(s.index)];
        snap.resize(std::size_t(src.width()));
        for (int x = src.x0; x < src.x1; ++x) snap[std::size_t(x - src.x0)] = f[{x, row}];
    }

    std::vector<SweepStats> per_strip(strips.size());
    run_strips(strips, [&](const Strip& s) {
        SweepStats& st = per_strip[std::size_t(s.index)];
        const auto& snap = snapshot[std::size_t(s.index)];
        auto neighbor = [&](Point n) -> const NnfEntry& {
            if (n.y < s.begin || n.y >= s.end) return snap[std::size_t(n.x - src.x0)];
            return f[n];
        };
        const int y_first = dir == ScanDirection::Forward ? s.begin : s.end - 1;
        const int y_last = dir == ScanDirection::Forward ? s.end : s.begin - 1;
        const int x_first = dir == ScanDirection::Forward ? src.x0 : src.x1 - 1;
        const int x_last = dir == ScanDirection::Forward ? src.x1 : src.x0 - 1;
        for (int y = y_first; y != y_last; y += step) {
            for (int x = x_first; x != x_last; x += step) {
                const Point z{x, y};
                const std::size_t idx = src.index(z);
                if (c && c->is_pinned(idx)) continue;
                NnfEntry best = f.entries()[idx];
                const double before = best.dist;

                const Point deltas[2] = {{step, 0}, {0, step}};
                for (const Point d : deltas) {
                    const Point n = z - d;
                    if (!src.contains(n)) continue;
                    const Point cand = detail::shift_candidate(neighbor(n).target, d, dst);
                    try_candidate(best, z, cand, metric, params.early_stop, c, st.evaluations);
                }

                CounterRng rng(params.seed, std::uint64_t(x), std::uint64_t(y), std::uint64_t(sweep),
                               detail::kSearchStream);
                random_search_entry(best, z, dst, metric, w, params.alpha, params.early_stop, rng, c,
                                    st.evaluations);
                if (best.dist < before) {
                    f.entries()[idx] = best;
                    ++st.updates;
                }
            }
        }
    });

    SweepStats total;
    for (const auto& st : per_strip) {
        total.updates += st.updates;
        total.evaluations += st.evaluations;
    }
    for (const auto& snap : snapshot) total.aux_bytes += snap.capacity() * sizeof(NnfEntry);
    return total;
}

/// Exhaustive nearest neighbors: argmin over every target center, ties
/// resolved toward the earliest target in raster order.
template <PatchMetric Metric>
void brute_force_field(Nnf& f, const Metric& metric, int threads = 1, const MatchConstraints* c = nullptr) {
    const Rect src = f.source_rect();
    const Rect dst = f.target_rect();
    parallel_rows(src.y0, src.y1, threads, [&](int y) {
        for (int x = src.x0; x < src.x1; ++x) {
            const Point z{x, y};
            NnfEntry best;
            for (int ty = dst.y0; ty < dst.y1; ++ty) {
                for (int tx = dst.x0; tx < dst.x1; ++tx) {
                    const Point t{tx, ty};
                    if (c && !c->allows(z, t)) continue;
                    const double d = metric(z, t, best.dist);
                    if (d < best.dist) best = {t, d};
                }
            }
            f[z] = best;
        }
    });
}

}  // namespace pm
