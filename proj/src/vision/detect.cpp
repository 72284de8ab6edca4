#include "pm/vision/detect.hpp"

#include <cmath>
#include <numbers>

#include "pm/core/error.hpp"
#include "pm/core/rng.hpp"

namespace pm {

using Vec = std::array<double, 2>;

std::array<double, 2> Similarity::apply(double x, double y) const {
    const double c = scale * std::cos(theta), s = scale * std::sin(theta);
    return {c * x - s * y + tx, s * x + c * y + ty};
}

void DetectParams::validate() const {
    search.validate();
    if (ransac_iterations < 1) throw InvalidArgument("RANSAC iterations must be >= 1");
    if (!(inlier_threshold > 0.0)) throw InvalidArgument("inlier threshold must be positive");
    if (!(min_confidence >= 0.0 && min_confidence <= 1.0)) throw InvalidArgument("minimum confidence must lie in [0, 1]");
}

std::optional<Similarity> fit_similarity(std::span<const Vec> from, std::span<const Vec> to) {
    if (from.size() != to.size()) throw InvalidArgument("point sets differ in size");
    const std::size_t n = from.size();
    if (n < 2) return std::nullopt;
    double mfx = 0, mfy = 0, mtx = 0, mty = 0;
    for (std::size_t i = 0; i < n; ++i) mfx += from[i][0], mfy += from[i][1], mtx += to[i][0], mty += to[i][1];
    mfx /= double(n), mfy /= double(n), mtx /= double(n), mty /= double(n);
    // With complex numbers p = x + iy, the optimal a = s e^{i theta} is
    // sum(conj(p) q) / sum(|p|^2) over centered points.
    double re = 0, im = 0, var = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double px = from[i][0] - mfx, py = from[i][1] - mfy;
        const double qx = to[i][0] - mtx, qy = to[i][1] - mty;
        re += px * qx + py * qy;
        im += px * qy - py * qx;
        var += px * px + py * py;
    }
    if (var < 1e-12) return std::nullopt;
    Similarity s;
    s.scale = std::hypot(re, im) / var;
    if (s.scale < 1e-12) return std::nullopt;
    s.theta = std::atan2(im, re);
    const Vec m = s.apply(mfx, mfy);
    s.tx = mtx - (m[0] - s.tx);
    s.ty = mty - (m[1] - s.ty);
    return s;
}

std::optional<Detection> detect_object(const ImageBuffer& templ, const ImageBuffer& scene, const PatchGeometry& geom,
                                       const TransformRange& range, const DetectParams& params) {
    params.validate();
    if (geom.valid_rect(templ).empty()) throw InvalidArgument("template smaller than patch");
    GnnfParams gp;
    gp.search = params.search;
    gp.range = range;
    gp.standardize = true;
    const GeneralizedNnf field = compute_gnnf(templ, scene, geom, gp);

    const Rect src = field.source_rect();
    std::vector<Vec> from(src.area()), to(src.area());
    for (std::size_t i = 0; i < src.area(); ++i) {
        const Point z = src.at(i);
        from[i] = {double(z.x), double(z.y)};
        to[i] = {double(field.entries()[i].target.x), double(field.entries()[i].target.y)};
    }
    const double thr2 = params.inlier_threshold * params.inlier_threshold;
    auto inliers = [&](const Similarity& s, std::vector<std::size_t>* out) {
        std::size_t n = 0;
        for (std::size_t i = 0; i < from.size(); ++i) {
            const Vec p = s.apply(from[i][0], from[i][1]);
            const double dx = p[0] - to[i][0], dy = p[1] - to[i][1];
            if (dx * dx + dy * dy > thr2) continue;
            ++n;
            if (out) out->push_back(i);
        }
        return n;
    };
    auto in_range = [&](const Similarity& s) {
        // Allow one RANSAC tolerance of slack around the searched box.
        const double dt = 0.1, ds = 0.1;
        double t = s.theta;
        const double mid = 0.5 * (range.theta_min + range.theta_max);
        while (t - mid > std::numbers::pi) t -= 2 * std::numbers::pi;
        while (t - mid < -std::numbers::pi) t += 2 * std::numbers::pi;
        return t >= range.theta_min - dt && t <= range.theta_max + dt && s.scale >= range.scale_min * (1 - ds) &&
               s.scale <= range.scale_max * (1 + ds);
    };

    CounterRng rng(params.search.seed, 0xde7ec7);
    std::optional<Similarity> best;
    std::size_t best_n = 0;
    for (int it = 0; it < params.ransac_iterations; ++it) {
        const std::size_t i = rng.below(from.size()), j = rng.below(from.size());
        if (i == j) continue;
        const Vec f2[2] = {from[i], from[j]}, t2[2] = {to[i], to[j]};
        const auto s = fit_similarity(f2, t2);
        if (!s || !in_range(*s)) continue;
        const std::size_t n = inliers(*s, nullptr);
        if (n > best_n) best_n = n, best = s;
    }
    if (!best) return std::nullopt;
    for (int round = 0; round < 3; ++round) {
        std::vector<std::size_t> idx;
        inliers(*best, &idx);
        if (idx.size() < 2) break;
        std::vector<Vec> f, t;
        for (const std::size_t i : idx) f.push_back(from[i]), t.push_back(to[i]);
        const auto refined = fit_similarity(f, t);
        if (!refined) break;
        best = refined;
    }
    Detection d;
    d.transform = *best;
    d.confidence = double(inliers(*best, nullptr)) / double(from.size());
    if (d.confidence < params.min_confidence) return std::nullopt;
    return d;
}

}  // namespace pm
