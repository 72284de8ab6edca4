#include "pm/synthesis/bds.hpp"

#include "pm/annf/annf.hpp"
#include "pm/core/color.hpp"
#include "pm/core/error.hpp"

namespace pm {

namespace {

double weighted_mean(const Nnf& f, const std::vector<float>* weights, Extent e) {
    const Rect r = f.source_rect();
    double sum = 0.0, wsum = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        const Point z = r.at(i);
        const double w = weights ? double((*weights)[std::size_t(z.y) * std::size_t(e.width) + std::size_t(z.x)]) : 1.0;
        sum += w * f.entries()[i].dist;
        wsum += w;
    }
    return wsum > 0 ? sum / wsum : 0.0;
}

}  // namespace

BdsScore bds_distance(const ImageBuffer& S, const ImageBuffer& T, const PatchGeometry& geom, const BdsOptions& opts) {
    if (geom.valid_rect(S).empty() || geom.valid_rect(T).empty()) throw InvalidArgument("image smaller than patch");
    for (const auto* w : {opts.source_weights, opts.target_weights})
        if (w && w->size() != (w == opts.source_weights ? S.pixel_count() : T.pixel_count()))
            throw InvalidArgument("weight map size mismatch");
    const ImageBuffer s = convert(S, opts.space);
    const ImageBuffer t = convert(T, opts.space);
    if (s.channels() != t.channels()) throw InvalidArgument("channel count mismatch");
    Nnf st, ts;
    if (opts.exact) {
        st = brute_force_nnf(s, t, geom, opts.search.threads);
        ts = brute_force_nnf(t, s, geom, opts.search.threads);
    } else {
        SearchParams p = opts.search;
        st = compute_nnf(s, t, geom, p);
        p.seed = p.seed ^ 0x7a7a7a7aULL;
        ts = compute_nnf(t, s, geom, p);
    }
    return {weighted_mean(st, opts.source_weights, S.extent()), weighted_mean(ts, opts.target_weights, T.extent())};
}

ImageBuffer vote_and_average(const ImageBuffer& current, const Nnf* source_to_target, const Nnf* target_to_source,
                             const ImageBuffer& S, const std::vector<float>* source_weights) {
    const int c = S.channels();
    if (current.channels() != c) throw InvalidArgument("channel count mismatch");
    if (source_weights && source_weights->size() != S.pixel_count()) throw InvalidArgument("weight map size mismatch");
    if (source_to_target && (source_to_target->source_extent() != S.extent() ||
                             source_to_target->target_extent() != current.extent()))
        throw InvalidArgument("source-to-target field does not match the images");
    if (target_to_source && (target_to_source->source_extent() != current.extent() ||
                             target_to_source->target_extent() != S.extent()))
        throw InvalidArgument("target-to-source field does not match the images");

    const int W = current.width();
    std::vector<double> acc(current.pixel_count() * std::size_t(c), 0.0);
    std::vector<double> wacc(current.pixel_count(), 0.0);
    auto splat = [&](const Nnf& f, Point s_center, Point t_center, double scale) {
        const int h = f.geom().half();
        for (int dy = -h; dy <= h; ++dy) {
            for (int dx = -h; dx <= h; ++dx) {
                const int sx = s_center.x + dx, sy = s_center.y + dy;
                const double w =
                    scale * (source_weights ? double((*source_weights)[std::size_t(sy) * std::size_t(S.width()) + std::size_t(sx)])
                                            : 1.0);
                const std::size_t ti = std::size_t(t_center.y + dy) * std::size_t(W) + std::size_t(t_center.x + dx);
                const float* src = S.pixel(sx, sy);
                for (int k = 0; k < c; ++k) acc[ti * std::size_t(c) + std::size_t(k)] += w * src[k];
                wacc[ti] += w;
            }
        }
    };
    if (target_to_source && target_to_source->size() > 0) {
        const double scale = 1.0 / double(target_to_source->size());
        const Rect r = target_to_source->source_rect();
        for (std::size_t i = 0; i < target_to_source->size(); ++i) {
            const NnfEntry& e = target_to_source->entries()[i];
            if (!target_to_source->target_rect().contains(e.target)) continue;
            splat(*target_to_source, e.target, r.at(i), scale);
        }
    }
    if (source_to_target && source_to_target->size() > 0) {
        const double scale = 1.0 / double(source_to_target->size());
        const Rect r = source_to_target->source_rect();
        for (std::size_t i = 0; i < source_to_target->size(); ++i) {
            const NnfEntry& e = source_to_target->entries()[i];
            if (!source_to_target->target_rect().contains(e.target)) continue;
            splat(*source_to_target, r.at(i), e.target, scale);
        }
    }

    ImageBuffer out = current;
    for (std::size_t p = 0; p < out.pixel_count(); ++p) {
        if (!(wacc[p] > 0)) continue;
        float* dst = out.data().data() + p * std::size_t(c);
        for (int k = 0; k < c; ++k) dst[k] = float(acc[p * std::size_t(c) + std::size_t(k)] / wacc[p]);
    }
    return out;
}

}  // namespace pm
