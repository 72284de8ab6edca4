#include "pm/synthesis/model.hpp"

#include <cmath>
#include <optional>

#include "pm/core/error.hpp"

namespace pm {

namespace {

struct Line {
    double a = 0, b = 0, c = 0;
    double residual(Vec2 p) const { return std::abs(a * p.x + b * p.y + c); }
    Vec2 project(Vec2 p) const {
        const double r = a * p.x + b * p.y + c;
        return {p.x - r * a, p.y - r * b};
    }
};

// Line through p with unit normal perpendicular to direction (dx, dy).
std::optional<Line> line_through(Vec2 p, double dx, double dy) {
    const double len = std::hypot(dx, dy);
    if (len < 1e-12) return std::nullopt;
    const double a = -dy / len, b = dx / len;
    return Line{a, b, -(a * p.x + b * p.y)};
}

// Total least squares line through the given points.
std::optional<Line> tls_line(const std::vector<Vec2>& pts) {
    if (pts.size() < 2) return std::nullopt;
    double mx = 0, my = 0;
    for (const Vec2& p : pts) mx += p.x, my += p.y;
    mx /= double(pts.size());
    my /= double(pts.size());
    double sxx = 0, sxy = 0, syy = 0;
    for (const Vec2& p : pts) {
        sxx += (p.x - mx) * (p.x - mx);
        sxy += (p.x - mx) * (p.y - my);
        syy += (p.y - my) * (p.y - my);
    }
    // Direction of largest spread: principal eigenvector of the scatter matrix.
    const double theta = 0.5 * std::atan2(2.0 * sxy, sxx - syy);
    return line_through({mx, my}, std::cos(theta), std::sin(theta));
}

std::size_t count_within(const std::vector<double>& residuals, double threshold) {
    std::size_t n = 0;
    for (const double r : residuals) n += r <= threshold;
    return n;
}

}  // namespace

double line_residual(const ModelFit& fit, Vec2 p) { return Line{fit.a, fit.b, fit.c}.residual(p); }

ModelFit fit_and_project_model(std::span<const Correspondence> points, const ModelConstraint& model,
                               const RansacParams& params, CounterRng& rng) {
    if (params.iterations < 1 || !(params.inlier_threshold > 0) || params.min_inlier_fraction < 0 ||
        params.min_inlier_fraction > 1)
        throw InvalidArgument("invalid RANSAC parameters");
    ModelFit fit;
    const std::size_t n = points.size();
    for (const auto& p : points) fit.projected.push_back(p.target);
    fit.inlier.assign(n, 0);
    const double thr = params.inlier_threshold;
    const auto needed = std::size_t(std::ceil(params.min_inlier_fraction * double(n)));

    if (model.is_line()) {
        if (n < 2) return fit;
        std::vector<Vec2> targets;
        for (const auto& p : points) targets.push_back(p.target);
        auto residuals_of = [&](const Line& l) {
            std::vector<double> r(n);
            for (std::size_t i = 0; i < n; ++i) r[i] = l.residual(targets[i]);
            return r;
        };

        Line line;
        if (model.kind == ModelKind::FixedPositionLine) {
            const auto l = line_through({model.tx0, model.ty0}, model.tx1 - model.tx0, model.ty1 - model.ty0);
            if (!l) throw InvalidArgument("degenerate fixed line");
            line = *l;
        } else {
            std::optional<Line> best;
            std::size_t best_count = 0;
            for (int it = 0; it < params.iterations; ++it) {
                std::optional<Line> h;
                if (model.kind == ModelKind::FreeLine) {
                    const std::size_t i = rng.below(n);
                    std::size_t j = rng.below(n - 1);
                    if (j >= i) ++j;
                    h = line_through(targets[i], targets[j].x - targets[i].x, targets[j].y - targets[i].y);
                } else {
                    h = line_through(targets[rng.below(n)], model.x1 - model.x0, model.y1 - model.y0);
                }
                if (!h) continue;
                const std::size_t count = count_within(residuals_of(*h), thr);
                if (count > best_count) best = h, best_count = count;
            }
            if (!best || best_count < needed || best_count < 2) return fit;
            // Refit on the inliers of the best hypothesis.
            std::vector<Vec2> inl;
            const auto r = residuals_of(*best);
            for (std::size_t i = 0; i < n; ++i)
                if (r[i] <= thr) inl.push_back(targets[i]);
            if (model.kind == ModelKind::FreeLine) {
                line = tls_line(inl).value_or(*best);
            } else {
                double mean_c = 0;
                for (const Vec2& p : inl) mean_c += -(best->a * p.x + best->b * p.y);
                line = {best->a, best->b, mean_c / double(inl.size())};
            }
        }
        fit.ok = true;
        fit.a = line.a, fit.b = line.b, fit.c = line.c;
        const auto r = residuals_of(line);
        for (std::size_t i = 0; i < n; ++i) {
            fit.projected[i] = line.project(targets[i]);
            if (r[i] <= thr) {
                fit.inlier[i] = 1;
                ++fit.inlier_count;
                fit.max_inlier_residual = std::max(fit.max_inlier_residual, r[i]);
            }
        }
        return fit;
    }

    // Regions: target = k * source + t with k fixed (1 for translation).
    const double k = model.kind == ModelKind::ScaleRegion ? model.scale : 1.0;
    const std::size_t min_points = model.kind == ModelKind::ScaleRegion ? 3 : 2;
    if (n < min_points) return fit;
    auto residual = [&](const Correspondence& p, double tx, double ty) {
        return std::hypot(k * p.source.x + tx - p.target.x, k * p.source.y + ty - p.target.y);
    };
    std::size_t best_count = 0;
    for (int it = 0; it < params.iterations; ++it) {
        const auto& h = points[rng.below(n)];
        const double tx = h.target.x - k * h.source.x, ty = h.target.y - k * h.source.y;
        std::size_t count = 0;
        for (const auto& p : points) count += residual(p, tx, ty) <= thr;
        best_count = std::max(best_count, count);
    }
    if (best_count < needed) return fit;
    // Every point takes part in the final estimate.
    double tx = 0, ty = 0;
    for (const auto& p : points) tx += p.target.x - k * p.source.x, ty += p.target.y - k * p.source.y;
    tx /= double(n);
    ty /= double(n);
    fit.ok = true;
    fit.scale = k, fit.tx = tx, fit.ty = ty;
    for (std::size_t i = 0; i < n; ++i) {
        fit.projected[i] = {k * points[i].source.x + tx, k * points[i].source.y + ty};
        const double r = residual(points[i], tx, ty);
        if (r <= thr) {
            fit.inlier[i] = 1;
            ++fit.inlier_count;
            fit.max_inlier_residual = std::max(fit.max_inlier_residual, r);
        }
    }
    return fit;
}

}  // namespace pm
