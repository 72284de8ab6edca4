#include "pm/annf/annf.hpp"

#include <cmath>

#include "pm/core/pyramid.hpp"

namespace pm {

void SearchParams::validate() const {
    if (iterations < 1) throw InvalidArgument("iterations must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("alpha must lie in (0, 1)");
    if (w < 0.0) throw InvalidArgument("search radius must be non-negative");
    if (threads < 1) throw InvalidArgument("threads must be >= 1");
}

namespace {

void check_pair(const ImageBuffer& A, const ImageBuffer& B, const PatchGeometry& geom) {
    if (A.channels() != B.channels()) throw InvalidArgument("images have different channel counts");
    if (geom.valid_rect(A).empty() || geom.valid_rect(B).empty())
        throw InvalidArgument("image smaller than patch");
}

SsdMetric ssd(const ImageBuffer& A, const ImageBuffer& B, const PatchGeometry& geom) {
    return {&A, &B, geom.size()};
}

}  // namespace

Nnf init_random(const ImageBuffer& A, const ImageBuffer& B, const PatchGeometry& geom, std::uint64_t seed,
                const MatchConstraints* constraints) {
    check_pair(A, B, geom);
    Nnf f(A.extent(), B.extent(), geom, seed);
    init_random_field(f, ssd(A, B, geom), seed, constraints);
    return f;
}

Point upscale_candidate(const Nnf& coarse, Point z, Extent fine_source, Extent fine_target) {
    const Extent cs = coarse.source_extent();
    const Extent ct = coarse.target_extent();
    const double sax = double(fine_source.width) / cs.width;
    const double say = double(fine_source.height) / cs.height;
    const double sbx = double(fine_target.width) / ct.width;
    const double sby = double(fine_target.height) / ct.height;
    const Point cz = coarse.source_rect().clamp(
        {int(std::lround(z.x / sax)), int(std::lround(z.y / say))});
    const Point t = coarse[cz].target;
    // Keep the sub-cell remainder of z so the fine offset matches the coarse one.
    const Point rem = z - Point{int(std::lround(cz.x * sax)), int(std::lround(cz.y * say))};
    return Point{int(std::lround(t.x * sbx)), int(std::lround(t.y * sby))} + rem;
}

Nnf init_upsample(const Nnf& coarse, const ImageBuffer& fineA, const ImageBuffer& fineB,
                  const SearchParams& params, int merge_iterations, const MatchConstraints* constraints) {
    const PatchGeometry& geom = coarse.geom();
    check_pair(fineA, fineB, geom);
    auto consistent = [](Extent coarse_e, Extent fine_e) {
        if (coarse_e.width > fine_e.width || coarse_e.height > fine_e.height) return false;
        const double rx = double(fine_e.width) / coarse_e.width;
        const double ry = double(fine_e.height) / coarse_e.height;
        return std::abs(rx - ry) <= 0.25 * std::max(rx, ry);
    };
    if (!consistent(coarse.source_extent(), fineA.extent()) || !consistent(coarse.target_extent(), fineB.extent()))
        throw InvalidArgument("init_upsample: coarse field dimensions do not match the fine images");

    const SsdMetric metric = ssd(fineA, fineB, geom);
    Nnf f(fineA.extent(), fineB.extent(), geom, params.seed);
    init_random_field(f, metric, params.seed, constraints, params.threads);
    for (int i = 0; i < merge_iterations; ++i) sweep_field(f, metric, params, i, constraints);

    const Rect src = f.source_rect();
    const Rect dst = f.target_rect();
    parallel_rows(src.y0, src.y1, params.threads, [&](int y) {
        for (int x = src.x0; x < src.x1; ++x) {
            const Point z{x, y};
            const std::size_t idx = src.index(z);
            if (constraints && constraints->is_pinned(idx)) continue;
            const Point cand = dst.clamp(upscale_candidate(coarse, z, fineA.extent(), fineB.extent()));
            if (constraints && !constraints->allows(z, cand)) continue;
            NnfEntry& e = f.entries()[idx];
            const double d = metric(z, cand, params.early_stop ? e.dist : kInfinity);
            if (d < e.dist) e = {cand, d};
        }
    });
    return f;
}

std::vector<Point> propagation_candidates(const Nnf& f, Point z, ScanDirection direction) {
    const Rect src = f.source_rect();
    const Rect dst = f.target_rect();
    const int step = direction == ScanDirection::Forward ? 1 : -1;
    std::vector<Point> out;
    for (const Point d : {Point{step, 0}, Point{0, step}}) {
        const Point n = z - d;
        if (src.contains(n)) out.push_back(detail::shift_candidate(f[n].target, d, dst));
    }
    return out;
}

std::vector<double> random_search_radii(double w, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("alpha must lie in (0, 1)");
    std::vector<double> radii;
    for (double r = w; r >= 1.0; r *= alpha) radii.push_back(r);
    return radii;
}

NnfEntry random_search(Nnf& f, const ImageBuffer& A, const ImageBuffer& B, Point z, const SearchParams& params,
                       CounterRng& rng) {
    if (!f.source_rect().contains(z)) throw InvalidArgument("random_search: coordinate outside valid rectangle");
    NnfEntry best = f[z];
    std::size_t evals = 0;
    random_search_entry(best, z, f.target_rect(), ssd(A, B, f.geom()), params.radius_for(f.target_extent()),
                        params.alpha, params.early_stop, rng, nullptr, evals);
    f[z] = best;
    return best;
}

SweepStats iterate(Nnf& f, const ImageBuffer& A, const ImageBuffer& B, const SearchParams& params, int sweep,
                   const MatchConstraints* constraints) {
    params.validate();
    return sweep_field(f, ssd(A, B, f.geom()), params, sweep, constraints);
}

Nnf compute_nnf(const ImageBuffer& A, const ImageBuffer& B, const PatchGeometry& geom, const SearchParams& params,
                bool multiscale, NnfRunStats* stats) {
    params.validate();
    check_pair(A, B, geom);
    NnfRunStats local;
    NnfRunStats& st = stats ? *stats : local;
    st = {};

    auto run_sweeps = [&](Nnf& f, const ImageBuffer& a, const ImageBuffer& b, bool record) {
        const SsdMetric metric = ssd(a, b, geom);
        for (int i = 0; i < params.iterations; ++i) {
            const SweepStats s = sweep_field(f, metric, params, i);
            st.peak_aux_bytes = std::max(st.peak_aux_bytes, f.memory_bytes() + s.aux_bytes);
            if (record) st.mean_distance_per_sweep.push_back(f.mean_distance());
        }
    };

    if (!multiscale) {
        Nnf f = init_random(A, B, geom, params.seed);
        st.peak_aux_bytes = f.memory_bytes();
        run_sweeps(f, A, B, true);
        return f;
    }

    const int min_dim = std::max(2 * geom.size(), 24);
    const auto ea = pyramid_extents(A.extent(), 0.5, std::min(min_dim, std::min(A.width(), A.height())));
    const auto eb = pyramid_extents(B.extent(), 0.5, std::min(min_dim, std::min(B.width(), B.height())));
    const std::size_t levels = std::min(ea.size(), eb.size());
    std::vector<ImageBuffer> pa, pb;
    for (std::size_t i = ea.size() - levels; i + 1 < ea.size(); ++i)
        pa.push_back(resize_area(A, ea[i].width, ea[i].height));
    for (std::size_t i = eb.size() - levels; i + 1 < eb.size(); ++i)
        pb.push_back(resize_area(B, eb[i].width, eb[i].height));

    if (pa.empty()) {
        Nnf f = init_random(A, B, geom, params.seed);
        run_sweeps(f, A, B, true);
        return f;
    }
    Nnf f = init_random(pa[0], pb[0], geom, params.seed);
    run_sweeps(f, pa[0], pb[0], false);
    for (std::size_t l = 1; l <= pa.size(); ++l) {
        const ImageBuffer& a = l < pa.size() ? pa[l] : A;
        const ImageBuffer& b = l < pb.size() ? pb[l] : B;
        Nnf fine = init_upsample(f, a, b, params, 1);
        st.peak_aux_bytes = std::max(st.peak_aux_bytes, fine.memory_bytes() + f.memory_bytes());
        f = std::move(fine);
        run_sweeps(f, a, b, l == pa.size());
    }
    return f;
}

Nnf brute_force_nnf(const ImageBuffer& A, const ImageBuffer& B, const PatchGeometry& geom, int threads) {
    check_pair(A, B, geom);
    Nnf f(A.extent(), B.extent(), geom);
    brute_force_field(f, ssd(A, B, geom), threads);
    return f;
}

}  // namespace pm
