#include "pm/gpm/gnnf.hpp"

#include <chrono>
#include <cmath>
#include <numbers>

#include "pm/core/parallel.hpp"
#include "pm/core/rng.hpp"
#include "pm/gpm/descriptor.hpp"

namespace pm {

namespace {

constexpr std::uint64_t kGnnfInitStream = 0x6e17;
constexpr std::uint64_t kGnnfSearchStream = 0x6e5e;

double footprint_margin(const PatchGeometry& geom, double theta, double scale) {
    return scale * geom.half() * (std::abs(std::cos(theta)) + std::abs(std::sin(theta)));
}

// Largest |cos| + |sin| over the theta interval; peaks at pi/4 + k*pi/2.
double worst_rotation_factor(double lo, double hi) {
    auto f = [](double t) { return std::abs(std::cos(t)) + std::abs(std::sin(t)); };
    double best = std::max(f(lo), f(hi));
    const double quarter = std::numbers::pi / 2;
    const double first = std::ceil((lo - std::numbers::pi / 4) / quarter);
    if (std::numbers::pi / 4 + first * quarter <= hi) best = std::numbers::sqrt2;
    return best;
}

struct Sampler {
    const ImageBuffer& img;
    SampleFilter filter;

    // Writes all channels at continuous position (x, y) to out.
    void sample(double x, double y, float* out) const {
        const int c = img.channels();
        if (filter == SampleFilter::Nearest) {
            const float* px = img.pixel(int(std::lround(x)), int(std::lround(y)));
            for (int k = 0; k < c; ++k) out[k] = px[k];
            return;
        }
        int x0 = int(std::floor(x)), y0 = int(std::floor(y));
        x0 = std::min(x0, img.width() - 2 < 0 ? 0 : img.width() - 2);
        y0 = std::min(y0, img.height() - 2 < 0 ? 0 : img.height() - 2);
        const int x1 = std::min(x0 + 1, img.width() - 1), y1 = std::min(y0 + 1, img.height() - 1);
        const double fx = x - x0, fy = y - y0;
        const float* p00 = img.pixel(x0, y0);
        const float* p10 = img.pixel(x1, y0);
        const float* p01 = img.pixel(x0, y1);
        const float* p11 = img.pixel(x1, y1);
        for (int k = 0; k < c; ++k) {
            const double top = p00[k] + (p10[k] - p00[k]) * fx;
            const double bot = p01[k] + (p11[k] - p01[k]) * fx;
            out[k] = float(top + (bot - top) * fy);
        }
    }
};

double standardized_distance(const ImageBuffer& A, Point a, const ImageBuffer& B, const GnnfEntry& t, int patch,
                             SampleFilter filter) {
    const int h = patch / 2;
    const int c = A.channels();
    const double cs = t.scale * std::cos(double(t.theta));
    const double sn = t.scale * std::sin(double(t.theta));
    const Sampler sampler{B, filter};
    thread_local std::vector<float> va, vb;
    va.resize(std::size_t(patch * patch * c));
    vb.resize(va.size());
    float* pa = va.data();
    float* pb = vb.data();
    for (int dy = -h; dy <= h; ++dy) {
        const float* ra = A.pixel(a.x - h, a.y + dy);
        pa = std::copy_n(ra, patch * c, pa);
        for (int dx = -h; dx <= h; ++dx, pb += c)
            sampler.sample(t.target.x + cs * dx - sn * dy, t.target.y + sn * dx + cs * dy, pb);
    }
    standardize(va);
    standardize(vb);
    double sum = 0.0;
    for (std::size_t i = 0; i < va.size(); ++i) sum += double(va[i] - vb[i]) * double(va[i] - vb[i]);
    return sum;
}

double gnnf_distance(const ImageBuffer& A, Point a, const ImageBuffer& B, const GnnfEntry& t, int patch,
                     SampleFilter filter, double bound, bool standardized = false) {
    if (standardized) return standardized_distance(A, a, B, t, patch, filter);
    const int h = patch / 2;
    const int c = A.channels();
    const double cs = t.scale * std::cos(double(t.theta));
    const double sn = t.scale * std::sin(double(t.theta));
    const Sampler sampler{B, filter};
    float buf[8];
    std::vector<float> wide;
    float* s = buf;
    if (c > 8) {
        wide.resize(std::size_t(c));
        s = wide.data();
    }
    double sum = 0.0;
    for (int dy = -h; dy <= h; ++dy) {
        const float* ra = A.pixel(a.x - h, a.y + dy);
        for (int dx = -h; dx <= h; ++dx) {
            sampler.sample(t.target.x + cs * dx - sn * dy, t.target.y + sn * dx + cs * dy, s);
            for (int k = 0; k < c; ++k) {
                const double d = double(ra[(dx + h) * c + k]) - double(s[k]);
                sum += d * d;
            }
        }
        if (sum >= bound) return sum;
    }
    return sum;
}

GnnfEntry clamp_entry(GnnfEntry e, Extent target, const PatchGeometry& geom) {
    const Rect r = transformed_valid_rect(target, geom, e.theta, e.scale);
    e.target = r.clamp(e.target);
    return e;
}

void check_inputs(const ImageBuffer& A, const ImageBuffer& B, const PatchGeometry& geom, const GnnfParams& p) {
    p.search.validate();
    p.range.validate();
    if (A.channels() != B.channels()) throw InvalidArgument("images have different channel counts");
    if (geom.valid_rect(A).empty()) throw InvalidArgument("source image smaller than patch");
    const double m = p.range.scale_max * geom.half() * worst_rotation_factor(p.range.theta_min, p.range.theta_max);
    if (2.0 * m > double(std::min(B.width(), B.height()) - 1) + 1e-9)
        throw InvalidArgument("scale range makes transformed patches exceed the target image");
}

}  // namespace

void TransformRange::validate() const {
    if (!(theta_min <= theta_max)) throw InvalidArgument("theta range must satisfy theta_min <= theta_max");
    if (!(scale_min > 0.0 && scale_min <= scale_max))
        throw InvalidArgument("scale range must satisfy 0 < scale_min <= scale_max");
}

GeneralizedNnf::GeneralizedNnf(Extent source, Extent target, PatchGeometry geom, TransformRange range)
    : source_(source), target_(target), geom_(geom), range_(range), entries_(geom.valid_rect(source).area()) {}

double GeneralizedNnf::mean_distance() const {
    if (entries_.empty()) return 0.0;
    double s = 0.0;
    for (const auto& e : entries_) s += e.dist;
    return s / double(entries_.size());
}

Rect transformed_valid_rect(Extent e, const PatchGeometry& geom, double theta, double scale) {
    const double m = footprint_margin(geom, theta, scale);
    const int lo = int(std::ceil(m - 1e-9));
    const int hx = int(std::floor(e.width - 1 - m + 1e-9));
    const int hy = int(std::floor(e.height - 1 - m + 1e-9));
    return {lo, lo, std::max(lo, hx + 1), std::max(lo, hy + 1)};
}

std::vector<float> sample_transformed_patch(const ImageBuffer& B, Point center, double theta, double scale,
                                            const PatchGeometry& geom, SampleFilter filter) {
    if (!transformed_valid_rect(B.extent(), geom, theta, scale).contains(center))
        throw InvalidArgument("transformed patch footprint escapes the image");
    const int h = geom.half();
    const int c = B.channels();
    const double cs = scale * std::cos(theta), sn = scale * std::sin(theta);
    const Sampler sampler{B, filter};
    std::vector<float> out(static_cast<std::size_t>(geom.area() * c));
    float* o = out.data();
    for (int dy = -h; dy <= h; ++dy)
        for (int dx = -h; dx <= h; ++dx, o += c)
            sampler.sample(center.x + cs * dx - sn * dy, center.y + sn * dx + cs * dy, o);
    return out;
}

double transformed_patch_distance(const ImageBuffer& A, Point a, const ImageBuffer& B, const GnnfEntry& t,
                                  const PatchGeometry& geom, SampleFilter filter, double bound) {
    if (!geom.valid_rect(A).contains(a)) throw InvalidArgument("source patch outside image");
    if (!transformed_valid_rect(B.extent(), geom, t.theta, t.scale).contains(t.target))
        throw InvalidArgument("transformed patch footprint escapes the image");
    if (A.channels() != B.channels()) throw InvalidArgument("images have different channel counts");
    return gnnf_distance(A, a, B, t, geom.size(), filter, bound);
}

GnnfEntry jacobian_propagate(const GnnfEntry& n, Point delta) {
    const double cs = n.scale * std::cos(double(n.theta));
    const double sn = n.scale * std::sin(double(n.theta));
    GnnfEntry out = n;
    out.target.x += int(std::lround(cs * delta.x - sn * delta.y));
    out.target.y += int(std::lround(sn * delta.x + cs * delta.y));
    out.dist = kInfinity;
    return out;
}

GeneralizedNnf init_random_gnnf(const ImageBuffer& A, const ImageBuffer& B, const PatchGeometry& geom,
                                const GnnfParams& params) {
    check_inputs(A, B, geom, params);
    GeneralizedNnf f(A.extent(), B.extent(), geom, params.range);
    const Rect src = f.source_rect();
    const TransformRange& r = params.range;
    parallel_rows(src.y0, src.y1, params.search.threads, [&](int y) {
        for (int x = src.x0; x < src.x1; ++x) {
            CounterRng rng(params.search.seed, std::uint64_t(x), std::uint64_t(y), kGnnfInitStream);
            GnnfEntry e;
            e.theta = float(rng.uniform(r.theta_min, r.theta_max));
            e.scale = float(rng.uniform(r.scale_min, r.scale_max));
            e.theta = std::clamp(e.theta, float(r.theta_min), float(r.theta_max));
            e.scale = std::clamp(e.scale, float(r.scale_min), float(r.scale_max));
            const Rect valid = transformed_valid_rect(B.extent(), geom, e.theta, e.scale);
            e.target = valid.at(rng.below(valid.area()));
            e.dist = gnnf_distance(A, {x, y}, B, e, geom.size(), params.filter, kInfinity, params.standardize);
            f[{x, y}] = e;
        }
    });
    return f;
}

SweepStats iterate_gnnf(GeneralizedNnf& f, const ImageBuffer& A, const ImageBuffer& B, const GnnfParams& params,
                        int sweep) {
    const SearchParams& sp = params.search;
    const TransformRange& r = params.range;
    const PatchGeometry& geom = f.geom();
    const Rect src = f.source_rect();
    const int step = sweep % 2 == 0 ? 1 : -1;
    const double w = sp.radius_for(B.extent());
    const double theta_half = (r.theta_max - r.theta_min) / 2;
    const double log_half = (std::log(r.scale_max) - std::log(r.scale_min)) / 2;
    const auto strips = make_strips(src.y0, src.y1, sp.threads);

    std::vector<std::vector<GnnfEntry>> snapshot(strips.size());
    for (const Strip& s : strips) {
        const int row = step > 0 ? s.begin - 1 : s.end;
        if (row < src.y0 || row >= src.y1) continue;
        auto& snap = snapshot[std::size_t(s.index)];
        for (int x = src.x0; x < src.x1; ++x) snap.push_back(f[{x, row}]);
    }

    std::vector<SweepStats> per(strips.size());
    run_strips(strips, [&](const Strip& s) {
        SweepStats& st = per[std::size_t(s.index)];
        const auto& snap = snapshot[std::size_t(s.index)];
        auto consider = [&](GnnfEntry& best, Point z, GnnfEntry cand) {
            if (cand.target == best.target && cand.theta == best.theta && cand.scale == best.scale) return;
            ++st.evaluations;
            const double d = gnnf_distance(A, z, B, cand, geom.size(), params.filter,
                                           sp.early_stop ? best.dist : kInfinity, params.standardize);
            if (d < best.dist) {
                cand.dist = d;
                best = cand;
            }
        };
        const int y0 = step > 0 ? s.begin : s.end - 1, y1 = step > 0 ? s.end : s.begin - 1;
        const int x0 = step > 0 ? src.x0 : src.x1 - 1, x1 = step > 0 ? src.x1 : src.x0 - 1;
        for (int y = y0; y != y1; y += step) {
            for (int x = x0; x != x1; x += step) {
                const Point z{x, y};
                GnnfEntry best = f[z];
                const double before = best.dist;
                for (const Point d : {Point{step, 0}, Point{0, step}}) {
                    const Point n = z - d;
                    if (!src.contains(n)) continue;
                    const GnnfEntry& ne = (n.y < s.begin || n.y >= s.end) ? snap[std::size_t(n.x - src.x0)] : f[n];
                    consider(best, z, clamp_entry(jacobian_propagate(ne, d), B.extent(), geom));
                }

                CounterRng rng(sp.seed, std::uint64_t(x), std::uint64_t(y), std::uint64_t(sweep), kGnnfSearchStream);
                const GnnfEntry v0 = best;
                double shrink = 1.0;
                for (double radius = w; radius >= 1.0; radius *= sp.alpha, shrink *= sp.alpha) {
                    const double rx = rng.uniform(-1.0, 1.0), ry = rng.uniform(-1.0, 1.0);
                    const double rt = rng.uniform(-1.0, 1.0), rs = rng.uniform(-1.0, 1.0);
                    GnnfEntry cand;
                    cand.theta = float(std::clamp(double(v0.theta) + theta_half * shrink * rt, r.theta_min, r.theta_max));
                    cand.scale = float(std::clamp(std::exp(std::log(double(v0.scale)) + log_half * shrink * rs),
                                                  r.scale_min, r.scale_max));
                    cand.target = {v0.target.x + int(std::lround(radius * rx)),
                                   v0.target.y + int(std::lround(radius * ry))};
                    consider(best, z, clamp_entry(cand, B.extent(), geom));
                }
                if (best.dist < before) {
                    f[z] = best;
                    ++st.updates;
                }
            }
        }
    });
    SweepStats total;
    for (const auto& st : per) {
        total.updates += st.updates;
        total.evaluations += st.evaluations;
    }
    for (const auto& snap : snapshot) total.aux_bytes += snap.capacity() * sizeof(GnnfEntry);
    return total;
}

GeneralizedNnf compute_gnnf(const ImageBuffer& A, const ImageBuffer& B, const PatchGeometry& geom,
                            const GnnfParams& params, GnnfRunStats* stats) {
    GeneralizedNnf f = init_random_gnnf(A, B, geom, params);
    for (int i = 0; i < params.search.iterations; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        iterate_gnnf(f, A, B, params, i);
        if (stats) {
            stats->seconds_per_sweep.push_back(
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
            stats->mean_distance_per_sweep.push_back(f.mean_distance());
        }
    }
    return f;
}

}  // namespace pm
