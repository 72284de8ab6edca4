#include "pm/synthesis/tools.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "em_engine.hpp"
#include "pm/core/error.hpp"
#include "pm/core/pyramid.hpp"

namespace pm {

namespace {

// Next extent of a gradual rescale toward `goal`, one factor-`step` move per
// dimension.
Extent gradual_next(Extent cur, Extent goal, double step) {
    auto move = [&](int c, int g) {
        if (c == g) return c;
        const int n = g < c ? int(std::lround(c * step)) : int(std::lround(c / step));
        if (g < c) return std::max(g, std::min(n, c - 1));
        return std::min(g, std::max(n, c + 1));
    };
    return {move(cur.width, goal.width), move(cur.height, goal.height)};
}

std::vector<Extent> gradual_path(Extent from, Extent to, double step) {
    std::vector<Extent> path;
    for (Extent e = from; e != to;) {
        e = gradual_next(e, to, step);
        path.push_back(e);
    }
    return path;
}

void paste_resized(ImageBuffer& dst, const ImageBuffer& src, const Rect& from, const Rect& to) {
    const ImageBuffer piece = crop(src, from);
    const ImageBuffer scaled = (piece.width() == to.width() && piece.height() == to.height())
                                   ? piece
                                   : (to.width() >= piece.width() ? resize_bilinear(piece, to.width(), to.height())
                                                                  : resize_area(piece, to.width(), to.height()));
    for (int y = 0; y < to.height(); ++y)
        std::copy_n(scaled.pixel(0, y), std::size_t(to.width() * dst.channels()), dst.pixel(to.x0, to.y0 + y));
}

bool rect_inside(const Rect& r, Extent e) { return !r.empty() && r.x0 >= 0 && r.y0 >= 0 && r.x1 <= e.width && r.y1 <= e.height; }

Rect scaled_about_center(const Rect& r, double s) {
    const double cx = 0.5 * (r.x0 + r.x1), cy = 0.5 * (r.y0 + r.y1);
    const int w = std::max(1, int(std::lround(r.width() * s))), h = std::max(1, int(std::lround(r.height() * s)));
    const int x0 = int(std::lround(cx - 0.5 * w)), y0 = int(std::lround(cy - 0.5 * h));
    return {x0, y0, x0 + w, y0 + h};
}

}  // namespace

ImageBuffer fill_from_boundary(const ImageBuffer& img, const std::vector<std::uint8_t>& mask) {
    if (mask.size() != img.pixel_count()) throw InvalidArgument("mask size mismatch");
    const int W = img.width(), H = img.height(), c = img.channels();
    auto masked = [&](int x, int y) { return mask[std::size_t(y) * std::size_t(W) + std::size_t(x)] != 0; };
    std::vector<Point> boundary;
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            if (masked(x, y)) continue;
            bool touches = false;
            for (int dy = -1; dy <= 1 && !touches; ++dy)
                for (int dx = -1; dx <= 1 && !touches; ++dx) {
                    const int nx = x + dx, ny = y + dy;
                    touches = nx >= 0 && ny >= 0 && nx < W && ny < H && masked(nx, ny);
                }
            if (touches) boundary.push_back({x, y});
        }
    }
    ImageBuffer out = img;
    bool any = false;
    for (const auto m : mask) any |= m != 0;
    if (!any) return out;
    if (boundary.empty()) throw InvalidArgument("mask has no unmasked boundary to interpolate from");
    std::vector<double> acc(static_cast<std::size_t>(c));
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            if (!masked(x, y)) continue;
            std::fill(acc.begin(), acc.end(), 0.0);
            double wsum = 0.0;
            for (const Point b : boundary) {
                const double d2 = double(b.x - x) * (b.x - x) + double(b.y - y) * (b.y - y);
                const double w = 1.0 / d2;
                const float* p = img.pixel(b.x, b.y);
                for (int k = 0; k < c; ++k) acc[std::size_t(k)] += w * p[k];
                wsum += w;
            }
            for (int k = 0; k < c; ++k) out.at(x, y, k) = float(acc[std::size_t(k)] / wsum);
        }
    }
    return out;
}

void validate_retarget(Extent source, Extent target, int patch) {
    if (target.width < patch || target.height < patch) throw InvalidArgument("target dimensions smaller than the patch");
    if (target.width > 8 * source.width || target.height > 8 * source.height)
        throw InvalidArgument("target dimensions more than 8x the source");
}

void validate_reshuffle(Extent source, const Rect& region, Point offset) {
    if (!rect_inside(region, source)) throw InvalidArgument("reshuffle region outside the image");
    const Rect moved{region.x0 + offset.x, region.y0 + offset.y, region.x1 + offset.x, region.y1 + offset.y};
    if (!rect_inside(moved, source)) throw InvalidArgument("the moved region leaves the image");
}

void validate_local_scale(Extent source, const Rect& region, double factor) {
    if (!(factor > 0.0)) throw InvalidArgument("scale factor must be positive");
    if (!rect_inside(region, source)) throw InvalidArgument("region outside the image");
    if (!rect_inside(scaled_about_center(region, factor), source))
        throw InvalidArgument("the scaled region leaves the image");
}

ImageBuffer retarget(const ImageBuffer& S, Extent target, const ConstraintSet& constraints, const EmSchedule& schedule,
                     const EmObserver& observer) {
    validate_retarget(S.extent(), target, schedule.patch);
    detail::EmProblem p;
    p.source = &S;
    p.target = target;
    p.constraints = &constraints;
    detail::EmEngine engine(p, schedule, observer);
    const Extent start = engine.source_extent(0);
    const auto path = gradual_path(start, engine.target_extent(0), schedule.gradual_step);
    engine.plan_extra_iterations(int(path.size()) * schedule.step_iterations);
    engine.begin(resize_area(S, start.width, start.height));
    for (const Extent e : path) engine.resize_to(e, schedule.step_iterations);
    return engine.finish();
}

bool validate_completion(Extent source, const std::vector<std::uint8_t>& hole, const std::vector<int>& labels,
                         int patch) {
    const int W = source.width, H = source.height;
    const std::size_t n = std::size_t(W) * std::size_t(H);
    if (hole.size() != n) throw InvalidArgument("hole mask size mismatch");
    if (!labels.empty() && labels.size() != n) throw InvalidArgument("label map size mismatch");
    bool any = false;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            if (!hole[std::size_t(y) * std::size_t(W) + std::size_t(x)]) continue;
            any = true;
            if (x == 0 || y == 0 || x == W - 1 || y == H - 1) throw InvalidArgument("the hole touches the image border");
        }
    if (!any) return false;

    // Every label inside the hole needs an exterior patch with that label.
    const PatchGeometry geom(patch);
    const Rect valid = geom.valid_rect(source);
    std::vector<int> sat(std::size_t(W + 1) * std::size_t(H + 1), 0);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            sat[std::size_t(y + 1) * std::size_t(W + 1) + std::size_t(x + 1)] =
                int(hole[std::size_t(y) * std::size_t(W) + std::size_t(x)] != 0) +
                sat[std::size_t(y) * std::size_t(W + 1) + std::size_t(x + 1)] +
                sat[std::size_t(y + 1) * std::size_t(W + 1) + std::size_t(x)] - sat[std::size_t(y) * std::size_t(W + 1) + std::size_t(x)];
    auto hole_in_patch = [&](Point z) {
        const int h = geom.half();
        auto at = [&](int x, int y) { return sat[std::size_t(y) * std::size_t(W + 1) + std::size_t(x)]; };
        return at(z.x + h + 1, z.y + h + 1) - at(z.x - h, z.y + h + 1) - at(z.x + h + 1, z.y - h) + at(z.x - h, z.y - h);
    };
    std::set<int> exterior;
    bool exterior_patch = false;
    for (std::size_t i = 0; i < valid.area(); ++i) {
        const Point z = valid.at(i);
        if (hole_in_patch(z)) continue;
        exterior_patch = true;
        if (!labels.empty()) exterior.insert(labels[std::size_t(z.y) * std::size_t(W) + std::size_t(z.x)]);
    }
    if (!exterior_patch) throw InvalidArgument("no patch lies entirely outside the hole");
    if (!labels.empty()) {
        std::set<int> inside;
        for (std::size_t i = 0; i < hole.size(); ++i)
            if (hole[i] && labels[i]) inside.insert(labels[i]);
        for (const int l : inside)
            if (!exterior.count(l))
                throw ConstraintError("label " + std::to_string(l) + " inside the hole has no support outside it", l);
    }

    return true;
}

ImageBuffer complete(const ImageBuffer& S, const std::vector<std::uint8_t>& hole, const std::vector<int>& labels,
                     const EmSchedule& schedule, const EmObserver& observer) {
    if (!validate_completion(S.extent(), hole, labels, schedule.patch)) return S;
    ConstraintSet cs;
    cs.labels_source = labels;
    cs.labels_target = labels;
    const ImageBuffer T0 = fill_from_boundary(S, hole);
    detail::EmProblem p;
    p.source = &S;
    p.target = S.extent();
    p.constraints = &cs;
    p.free_mask = hole;
    p.fixed_values = &S;
    p.same_image = true;
    p.use_complete = false;
    detail::EmEngine engine(p, schedule, observer);
    const Extent e0 = engine.target_extent(0);
    engine.begin(resize_area(T0, e0.width, e0.height));
    return engine.finish();
}

ImageBuffer reshuffle(const ImageBuffer& S, const Rect& region, Point offset, ReshuffleInit init,
                      const ConstraintSet& constraints, const EmSchedule& schedule, const EmObserver& observer) {
    validate_reshuffle(S.extent(), region, offset);
    const Rect moved{region.x0 + offset.x, region.y0 + offset.y, region.x1 + offset.x, region.y1 + offset.y};

    ImageBuffer T0 = S;
    if (init == ReshuffleInit::Swap) {
        // The vacated area takes the content displaced from the destination.
        for (int y = region.y0; y < region.y1; ++y)
            for (int x = region.x0; x < region.x1; ++x) {
                const int sx = x + offset.x, sy = y + offset.y;
                std::copy_n(S.pixel(sx, sy), S.channels(), T0.pixel(x, y));
            }
    }
    paste_resized(T0, S, region, moved);
    if (init == ReshuffleInit::Interpolate) {
        std::vector<std::uint8_t> vacated(S.pixel_count(), 0);
        for (int y = region.y0; y < region.y1; ++y)
            for (int x = region.x0; x < region.x1; ++x)
                if (!moved.contains({x, y})) vacated[std::size_t(y) * std::size_t(S.width()) + std::size_t(x)] = 1;
        T0 = fill_from_boundary(T0, vacated);
    }
    ConstraintSet cs = constraints;
    cs.hard.push_back({region, offset});
    return em_optimize(S, T0, schedule, cs, observer);
}

ImageBuffer local_scale(const ImageBuffer& S, const Rect& region, double factor, const EmSchedule& schedule,
                        const EmObserver& observer) {
    validate_local_scale(S.extent(), region, factor);
    const int steps = int(std::ceil(std::abs(std::log(factor)) / std::abs(std::log(schedule.gradual_step)) - 1e-9));
    if (steps == 0) return S;

    // Inside the region only region patches are used, outside only the rest.
    ConstraintSet cs;
    auto label_map = [&](const Rect& r) {
        std::vector<int> l(S.pixel_count(), 2);
        for (int y = r.y0; y < r.y1; ++y)
            for (int x = r.x0; x < r.x1; ++x) l[std::size_t(y) * std::size_t(S.width()) + std::size_t(x)] = 1;
        return l;
    };
    cs.labels_source = label_map(region);
    cs.labels_target = cs.labels_source;

    detail::EmProblem p;
    p.source = &S;
    p.target = S.extent();
    p.constraints = &cs;
    detail::EmEngine engine(p, schedule, observer);
    engine.plan_extra_iterations(steps * schedule.step_iterations);
    const Extent e0 = engine.target_extent(0);
    const double lx = double(e0.width) / S.width(), ly = double(e0.height) / S.height();
    auto to_level = [&](const Rect& r) {
        return Rect{int(std::lround(r.x0 * lx)), int(std::lround(r.y0 * ly)), int(std::lround(r.x1 * lx)),
                    int(std::lround(r.y1 * ly))};
    };
    engine.begin(resize_area(S, e0.width, e0.height));
    Rect current = region;
    for (int k = 1; k <= steps; ++k) {
        const Rect next = scaled_about_center(region, std::pow(factor, double(k) / steps));
        ImageBuffer T = engine.output();
        const Rect from = to_level(current), to = to_level(next);
        if (!from.empty() && !to.empty()) paste_resized(T, engine.output(), from, to);
        cs.labels_target = label_map(next);
        engine.replace_output(T, schedule.step_iterations);
        current = next;
    }
    return engine.finish();
}

}  // namespace pm
