#include "pm/synthesis/em.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "em_engine.hpp"
#include "pm/annf/annf.hpp"
#include "pm/annf/engine.hpp"
#include "pm/core/color.hpp"
#include "pm/core/error.hpp"
#include "pm/core/pyramid.hpp"

namespace pm {

void EmSchedule::validate() const {
    PatchGeometry check(patch);
    (void)check;
    if (!(pyramid_factor > 0.0 && pyramid_factor < 1.0)) throw InvalidArgument("pyramid factor must lie in (0, 1)");
    if (min_dim < patch) throw InvalidArgument("pyramid minimum dimension must be at least the patch size");
    if (coarse_iterations < 1 || fine_iterations < 1 || step_iterations < 1 || search_iterations < 1)
        throw InvalidArgument("iteration counts must be >= 1");
    if (!(gradual_step > 0.0 && gradual_step < 1.0)) throw InvalidArgument("gradual step must lie in (0, 1)");
    if (radius_one_levels < 0) throw InvalidArgument("radius_one_levels must be >= 0");
    if (threads < 1) throw InvalidArgument("threads must be >= 1");
}

int EmSchedule::iterations_at(int level, int levels) const {
    (void)levels;
    int n = coarse_iterations;
    for (int k = 0; k < level; ++k) n /= 2;
    return std::max(fine_iterations, n);
}

namespace detail {

namespace {

constexpr std::uint64_t kFieldTs = 0x7451;
constexpr std::uint64_t kFieldSt = 0x5374;
constexpr std::uint64_t kModelStream = 0x6d6f;
constexpr std::uint64_t kUpscaleStream = 0x7570;

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    CounterRng r(seed, a, b, c);
    return r();
}

ImageBuffer resample(const ImageBuffer& img, Extent e) {
    if (img.extent() == e) return img;
    return resize_area(img, e.width, e.height);
}

// Level pixels whose footprint overlaps any set full-resolution pixel.
std::vector<std::uint8_t> downsample_any(const std::vector<std::uint8_t>& mask, Extent full, Extent e) {
    std::vector<std::uint8_t> out(std::size_t(e.width) * std::size_t(e.height), 0);
    const double sx = double(e.width) / full.width, sy = double(e.height) / full.height;
    for (int Y = 0; Y < full.height; ++Y) {
        for (int X = 0; X < full.width; ++X) {
            if (!mask[std::size_t(Y) * std::size_t(full.width) + std::size_t(X)]) continue;
            const int x0 = int(std::floor(X * sx)), x1 = std::min(e.width - 1, int(std::ceil((X + 1) * sx)) - 1);
            const int y0 = int(std::floor(Y * sy)), y1 = std::min(e.height - 1, int(std::ceil((Y + 1) * sy)) - 1);
            for (int y = y0; y <= y1; ++y)
                for (int x = x0; x <= x1; ++x) out[std::size_t(y) * std::size_t(e.width) + std::size_t(x)] = 1;
        }
    }
    return out;
}

// Most frequent nonzero label in each level pixel's footprint (ties to the
// smaller label), so thin labeled curves survive downsampling.
std::vector<int> downsample_labels(const std::vector<int>& labels, Extent full, Extent e) {
    if (labels.empty()) return {};
    if (full == e) return labels;
    std::vector<int> out(std::size_t(e.width) * std::size_t(e.height), 0);
    const double fx = double(full.width) / e.width, fy = double(full.height) / e.height;
    std::map<int, int> counts;
    for (int y = 0; y < e.height; ++y) {
        for (int x = 0; x < e.width; ++x) {
            counts.clear();
            const int X0 = int(std::floor(x * fx)), X1 = std::min(full.width, int(std::ceil((x + 1) * fx)));
            const int Y0 = int(std::floor(y * fy)), Y1 = std::min(full.height, int(std::ceil((y + 1) * fy)));
            for (int Y = Y0; Y < Y1; ++Y)
                for (int X = X0; X < X1; ++X)
                    if (const int l = labels[std::size_t(Y) * std::size_t(full.width) + std::size_t(X)]) ++counts[l];
            int best = 0, best_n = 0;
            for (const auto& [l, n] : counts)
                if (n > best_n) best = l, best_n = n;
            out[std::size_t(y) * std::size_t(e.width) + std::size_t(x)] = best;
        }
    }
    return out;
}

// Pixels on the segment, in order, without repeats.
std::vector<Point> raster_segment(double x0, double y0, double x1, double y1) {
    const double len = std::hypot(x1 - x0, y1 - y0);
    const int steps = std::max(1, int(std::ceil(len * 2.0)));
    std::vector<Point> out;
    for (int i = 0; i <= steps; ++i) {
        const double t = double(i) / steps;
        const Point p{int(std::lround(x0 + t * (x1 - x0))), int(std::lround(y0 + t * (y1 - y0)))};
        if (out.empty() || !(out.back() == p)) out.push_back(p);
    }
    std::vector<Point> unique;
    std::set<std::pair<int, int>> seen;
    for (const Point p : out)
        if (seen.insert({p.x, p.y}).second) unique.push_back(p);
    return unique;
}

Rect inner_rect(double x0, double y0, double x1, double y1, double sx, double sy) {
    return {int(std::ceil(x0 * sx - 1e-9)), int(std::ceil(y0 * sy - 1e-9)), int(std::floor(x1 * sx + 1e-9)),
            int(std::floor(y1 * sy + 1e-9))};
}

}  // namespace

std::pair<std::vector<Extent>, std::vector<Extent>> shared_pyramid(Extent a, Extent b, double factor, int min_dim,
                                                                   int patch) {
    if (std::min({a.width, a.height, b.width, b.height}) < patch)
        throw InvalidArgument("image smaller than the patch");
    auto levels_of = [&](Extent e) {
        if (std::min(e.width, e.height) < min_dim) return std::vector<Extent>{e};
        return pyramid_extents(e, factor, min_dim);
    };
    auto la = levels_of(a), lb = levels_of(b);
    const std::size_t n = std::min(la.size(), lb.size());
    return {std::vector<Extent>(la.end() - std::ptrdiff_t(n), la.end()),
            std::vector<Extent>(lb.end() - std::ptrdiff_t(n), lb.end())};
}

struct EmEngine::Impl {
    struct Level {
        int index = 0;
        Extent s_ext, t_ext;
        ImageBuffer S, S_match;
        std::vector<std::uint8_t> fixed;  // output pixels held at fixed_t
        ImageBuffer fixed_t;
        std::vector<std::uint8_t> source_ok;  // matchable source centers (empty = all)
        std::vector<int> lab_s, lab_t;
        std::vector<std::uint8_t> pinned;  // over output valid centers
        std::vector<Point> pin_target;
        std::vector<float> weights;
        std::vector<ModelConstraint> models;
        MatchConstraints ts_c, st_c;
        bool ts_constrained = false, st_constrained = false;
        double radius = 0.0;
    };

    EmProblem problem;
    EmSchedule schedule;
    EmObserver observer;
    PatchGeometry geom;
    std::vector<Extent> s_levels, t_levels;
    std::map<std::pair<int, int>, ImageBuffer> source_cache;
    ImageBuffer fixed_full;

    Level lvl;
    ImageBuffer T;
    Nnf ts, st;
    bool started = false;
    // Whether the current fields have been through at least one E-step.
    bool searched = false;
    int planned = 0, done = 0;
    std::uint64_t sweep_counter = 0;

    Impl(const EmProblem& p, const EmSchedule& s, const EmObserver& o)
        : problem(p), schedule(s), observer(o), geom(s.patch) {
        schedule.validate();
        if (!p.source) throw InvalidArgument("missing source image");
        const ImageBuffer& S = *p.source;
        std::tie(s_levels, t_levels) = shared_pyramid(S.extent(), p.target, s.pyramid_factor, s.min_dim, s.patch);
        const int L = int(s_levels.size());
        for (int k = 0; k < L; ++k) planned += s.iterations_at(k, L);
        if (!p.free_mask.empty() && p.free_mask.size() != std::size_t(p.target.width) * std::size_t(p.target.height))
            throw InvalidArgument("free mask size mismatch");
        if (p.fixed_values && p.fixed_values->extent() != p.target)
            throw InvalidArgument("fixed values must have the output extent");
        const ConstraintSet* c = p.constraints;
        if (c) {
            if (!c->labels_source.empty() && c->labels_source.size() != S.pixel_count())
                throw InvalidArgument("source label map size mismatch");
            if (!c->labels_target.empty() &&
                c->labels_target.size() != std::size_t(p.target.width) * std::size_t(p.target.height))
                throw InvalidArgument("target label map size mismatch");
            Annotations a{c->models, c->hard};
            validate_annotations(a, S.extent(), p.target);
        }
        // Full-resolution fixed values: the caller's, with hard regions pasted.
        if (p.fixed_values) fixed_full = *p.fixed_values;
        if (c && !c->hard.empty()) {
            if (fixed_full.empty()) fixed_full = ImageBuffer(p.target.width, p.target.height, S.channels(), S.space());
            for (const HardRegion& h : c->hard)
                for (int y = h.source.y0; y < h.source.y1; ++y)
                    for (int x = h.source.x0; x < h.source.x1; ++x)
                        std::copy_n(S.pixel(x, y), S.channels(), fixed_full.pixel(x + h.offset.x, y + h.offset.y));
        }
    }

    const ImageBuffer& source_at(Extent e) {
        const auto key = std::make_pair(e.width, e.height);
        auto it = source_cache.find(key);
        if (it == source_cache.end()) it = source_cache.emplace(key, resample(*problem.source, e)).first;
        return it->second;
    }

    Level make_level(int index, Extent s_ext, Extent t_ext) {
        Level L;
        L.index = index;
        L.s_ext = s_ext;
        L.t_ext = t_ext;
        L.S = source_at(s_ext);
        L.S_match = convert(L.S, schedule.space);
        const Extent sf = problem.source->extent(), tf = problem.target;
        const double ssx = double(s_ext.width) / sf.width, ssy = double(s_ext.height) / sf.height;
        const double tsx = double(t_ext.width) / tf.width, tsy = double(t_ext.height) / tf.height;
        const std::size_t tn = std::size_t(t_ext.width) * std::size_t(t_ext.height);
        const ConstraintSet* c = problem.constraints;

        // Fixed output pixels.
        std::vector<std::uint8_t> fixed;
        if (!problem.free_mask.empty()) {
            const auto free_l = downsample_any(problem.free_mask, tf, t_ext);
            fixed.resize(tn);
            for (std::size_t i = 0; i < tn; ++i) fixed[i] = !free_l[i];
        }
        std::vector<std::pair<Rect, Point>> hard_l;  // level rect in output, level source origin
        if (c) {
            for (const HardRegion& h : c->hard) {
                const Rect r = inner_rect(h.source.x0 + h.offset.x, h.source.y0 + h.offset.y, h.source.x1 + h.offset.x,
                                          h.source.y1 + h.offset.y, tsx, tsy);
                if (r.empty()) continue;
                if (fixed.empty()) fixed.assign(tn, 0);
                for (int y = r.y0; y < r.y1; ++y)
                    for (int x = r.x0; x < r.x1; ++x) fixed[std::size_t(y) * std::size_t(t_ext.width) + std::size_t(x)] = 1;
                hard_l.push_back({r, h.offset});
            }
        }
        if (!fixed.empty()) {
            L.fixed = std::move(fixed);
            L.fixed_t = resample(fixed_full, t_ext);
        }

        // Matchable source centers and identity pins (completion).
        const Rect s_valid = geom.valid_rect(s_ext);
        const Rect t_valid = geom.valid_rect(t_ext);
        const int h = geom.half();
        if (problem.same_image) {
            if (s_ext != t_ext) throw InvalidArgument("same-image problems need equal extents");
            // Summed-area table of free pixels.
            const int W = t_ext.width, H = t_ext.height;
            std::vector<int> sat(std::size_t(W + 1) * std::size_t(H + 1), 0);
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x) {
                    const int f = L.fixed.empty() ? 1 : !L.fixed[std::size_t(y) * std::size_t(W) + std::size_t(x)];
                    sat[std::size_t(y + 1) * std::size_t(W + 1) + std::size_t(x + 1)] =
                        f + sat[std::size_t(y) * std::size_t(W + 1) + std::size_t(x + 1)] +
                        sat[std::size_t(y + 1) * std::size_t(W + 1) + std::size_t(x)] -
                        sat[std::size_t(y) * std::size_t(W + 1) + std::size_t(x)];
                }
            auto free_in_patch = [&](Point z) {
                const int x0 = z.x - h, y0 = z.y - h, x1 = z.x + h + 1, y1 = z.y + h + 1;
                auto at = [&](int x, int y) { return sat[std::size_t(y) * std::size_t(W + 1) + std::size_t(x)]; };
                return at(x1, y1) - at(x0, y1) - at(x1, y0) + at(x0, y0);
            };
            L.source_ok.assign(s_valid.area(), 0);
            L.pinned.assign(t_valid.area(), 0);
            L.pin_target.assign(t_valid.area(), Point{});
            std::size_t ok = 0;
            for (std::size_t i = 0; i < s_valid.area(); ++i) {
                const bool clean = free_in_patch(s_valid.at(i)) == 0;
                L.source_ok[i] = clean;
                ok += clean;
                if (clean) L.pinned[i] = 1, L.pin_target[i] = s_valid.at(i);
            }
            if (ok == 0) throw InvalidArgument("no source patch lies entirely outside the hole at this resolution");
        }
        for (const auto& [r, off] : hard_l) {
            if (L.pinned.empty()) {
                L.pinned.assign(t_valid.area(), 0);
                L.pin_target.assign(t_valid.area(), Point{});
            }
            for (int y = std::max(r.y0, t_valid.y0); y < std::min(r.y1, t_valid.y1); ++y) {
                for (int x = std::max(r.x0, t_valid.x0); x < std::min(r.x1, t_valid.x1); ++x) {
                    const double X = (x + 0.5) / tsx - 0.5 - off.x, Y = (y + 0.5) / tsy - 0.5 - off.y;
                    const Point s{int(std::lround((X + 0.5) * ssx - 0.5)), int(std::lround((Y + 0.5) * ssy - 0.5))};
                    if (!s_valid.contains(s)) continue;
                    const std::size_t i = t_valid.index({x, y});
                    L.pinned[i] = 1;
                    L.pin_target[i] = s;
                }
            }
        }

        // Labels, dropping (at this level) labels without support on the other side.
        if (c && (!c->labels_source.empty() || !c->labels_target.empty())) {
            L.lab_s = c->labels_source.empty() ? std::vector<int>(std::size_t(s_ext.width) * std::size_t(s_ext.height), 0)
                                               : downsample_labels(c->labels_source, sf, s_ext);
            L.lab_t = c->labels_target.empty() ? std::vector<int>(tn, 0) : downsample_labels(c->labels_target, tf, t_ext);
            std::set<int> s_support, t_support;
            for (std::size_t i = 0; i < s_valid.area(); ++i) {
                if (!L.source_ok.empty() && !L.source_ok[i]) continue;
                const Point z = s_valid.at(i);
                s_support.insert(L.lab_s[std::size_t(z.y) * std::size_t(s_ext.width) + std::size_t(z.x)]);
            }
            for (std::size_t i = 0; i < t_valid.area(); ++i) {
                const Point z = t_valid.at(i);
                t_support.insert(L.lab_t[std::size_t(z.y) * std::size_t(t_ext.width) + std::size_t(z.x)]);
            }
            for (int& l : L.lab_t)
                if (l && !s_support.count(l)) l = 0;
            for (int& l : L.lab_s)
                if (l && !t_support.count(l)) l = 0;
        }

        // Models and vote weights.
        if (c && !c->models.empty()) {
            L.weights.assign(std::size_t(s_ext.width) * std::size_t(s_ext.height), 1.0f);
            for (ModelConstraint m : c->models) {
                m.x0 *= ssx, m.x1 *= ssx, m.y0 *= ssy, m.y1 *= ssy;
                m.tx0 *= tsx, m.tx1 *= tsx, m.ty0 *= tsy, m.ty1 *= tsy;
                L.models.push_back(m);
                auto mark = [&](Point p) {
                    if (p.x >= 0 && p.y >= 0 && p.x < s_ext.width && p.y < s_ext.height)
                        L.weights[std::size_t(p.y) * std::size_t(s_ext.width) + std::size_t(p.x)] = float(c->model_weight);
                };
                if (m.is_line()) {
                    for (const Point p : raster_segment(m.x0, m.y0, m.x1, m.y1)) mark(p);
                } else {
                    const Rect r = inner_rect(m.x0, m.y0, m.x1, m.y1, 1.0, 1.0);
                    for (int y = r.y0; y < r.y1; ++y)
                        for (int x = r.x0; x < r.x1; ++x) mark({x, y});
                }
            }
        }

        // Constraint predicates over centers.
        const int sw = s_ext.width, tw = t_ext.width;
        const bool labels = !L.lab_s.empty();
        L.ts_constrained = !L.source_ok.empty() || labels || !L.pinned.empty();
        L.st_constrained = labels;
        // The lambdas read the level through `this->lvl` once it is installed.
        if (!L.source_ok.empty() || labels) {
            L.ts_c.allow = [this, sw, tw, s_valid](Point t, Point s) {
                if (!lvl.source_ok.empty() && !lvl.source_ok[s_valid.index(s)]) return false;
                if (!lvl.lab_t.empty()) {
                    const int l = lvl.lab_t[std::size_t(t.y) * std::size_t(tw) + std::size_t(t.x)];
                    if (l && lvl.lab_s[std::size_t(s.y) * std::size_t(sw) + std::size_t(s.x)] != l) return false;
                }
                return true;
            };
        }
        L.ts_c.pinned = L.pinned;
        if (labels) {
            L.st_c.allow = [this, sw, tw](Point s, Point t) {
                const int l = lvl.lab_s[std::size_t(s.y) * std::size_t(sw) + std::size_t(s.x)];
                return !l || lvl.lab_t[std::size_t(t.y) * std::size_t(tw) + std::size_t(t.x)] == l;
            };
        }

        const int levels = int(s_levels.size());
        L.radius = (index > 0 && index >= levels - schedule.radius_one_levels) ? 1.0 : 0.0;
        return L;
    }

    void restore_fixed(ImageBuffer& img) const {
        if (lvl.fixed.empty()) return;
        const int c = img.channels();
        for (std::size_t i = 0; i < lvl.fixed.size(); ++i)
            if (lvl.fixed[i]) std::copy_n(lvl.fixed_t.data().data() + i * std::size_t(c), c, img.data().data() + i * std::size_t(c));
    }

    const MatchConstraints* ts_constraints() const { return lvl.ts_constrained ? &lvl.ts_c : nullptr; }
    const MatchConstraints* st_constraints() const { return lvl.st_constrained ? &lvl.st_c : nullptr; }

    void init_fields(const ImageBuffer& T_match) {
        const std::uint64_t seed = derive_seed(schedule.seed, std::uint64_t(lvl.index), sweep_counter, 0x1a1a);
        ts = Nnf(lvl.t_ext, lvl.s_ext, geom, seed);
        for (std::size_t i = 0; i < lvl.pinned.size(); ++i)
            if (lvl.pinned[i]) ts.entries()[i].target = lvl.pin_target[i];
        init_random_field(ts, SsdMetric{&T_match, &lvl.S_match, geom.size()}, seed ^ kFieldTs, ts_constraints(),
                          schedule.threads);
        if (problem.use_complete) {
            st = Nnf(lvl.s_ext, lvl.t_ext, geom, seed);
            init_random_field(st, SsdMetric{&lvl.S_match, &T_match, geom.size()}, seed ^ kFieldSt, st_constraints(),
                              schedule.threads);
        }
    }

    Nnf upscale_field(const Nnf& prev, Extent src, Extent dst, const ImageBuffer& A, const ImageBuffer& B,
                      const MatchConstraints* c, const std::vector<std::uint8_t>* pinned,
                      const std::vector<Point>* pin_target, std::uint64_t tag) {
        Nnf f(src, dst, geom, prev.seed());
        const Rect sr = f.source_rect(), dr = f.target_rect();
        const SsdMetric metric{&A, &B, geom.size()};
        for (std::size_t i = 0; i < f.size(); ++i) {
            const Point z = sr.at(i);
            Point cand;
            if (pinned && !pinned->empty() && (*pinned)[i]) {
                cand = (*pin_target)[i];
            } else {
                cand = dr.clamp(upscale_candidate(prev, z, src, dst));
                if (c && !c->allows(z, cand)) {
                    CounterRng rng(schedule.seed, std::uint64_t(z.x), std::uint64_t(z.y), kUpscaleStream ^ tag,
                                   sweep_counter);
                    cand = pm::detail::draw_target(rng, z, dr, c);
                }
            }
            f.entries()[i] = {cand, metric(z, cand, kInfinity)};
        }
        return f;
    }

    void install(Level L, const ImageBuffer& T_new) {
        const Nnf old_ts = std::move(ts), old_st = std::move(st);
        const bool finer = started && L.index != lvl.index;
        lvl = std::move(L);
        T = T_new;
        restore_fixed(T);
        const ImageBuffer T_match = convert(T, schedule.space);
        if (!searched) {
            // Unsearched fields carry no information worth upscaling.
            init_fields(T_match);
            started = true;
            return;
        }
        ts = upscale_field(old_ts, lvl.t_ext, lvl.s_ext, T_match, lvl.S_match, ts_constraints(), &lvl.pinned,
                           &lvl.pin_target, kFieldTs);
        if (problem.use_complete)
            st = upscale_field(old_st, lvl.s_ext, lvl.t_ext, lvl.S_match, T_match, st_constraints(), nullptr, nullptr,
                               kFieldSt);
        if (!finer) return;
        // Re-vote with the upscaled fields so the new level starts sharp.
        T = vote_and_average(T, problem.use_complete ? &st : nullptr, &ts, lvl.S,
                             lvl.weights.empty() ? nullptr : &lvl.weights);
        restore_fixed(T);
    }

    void project_models(const ImageBuffer& T_match, int iteration) {
        if (lvl.models.empty()) return;
        const Rect s_valid = geom.valid_rect(lvl.s_ext), t_valid = geom.valid_rect(lvl.t_ext);
        const SsdMetric m_ts{&T_match, &lvl.S_match, geom.size()};
        const SsdMetric m_st{&lvl.S_match, &T_match, geom.size()};
        const MatchConstraints* tc = ts_constraints();
        for (std::size_t k = 0; k < lvl.models.size(); ++k) {
            const ModelConstraint& m = lvl.models[k];
            // Source pixels covered by the model.
            std::vector<std::uint8_t> on(std::size_t(lvl.s_ext.width) * std::size_t(lvl.s_ext.height), 0);
            std::vector<Point> sources;
            auto add = [&](Point p) {
                if (!s_valid.contains(p)) return;
                auto& flag = on[std::size_t(p.y) * std::size_t(lvl.s_ext.width) + std::size_t(p.x)];
                if (!flag) flag = 1, sources.push_back(p);
            };
            if (m.is_line()) {
                for (const Point p : raster_segment(m.x0, m.y0, m.x1, m.y1)) add(p);
            } else {
                const Rect r{int(std::ceil(m.x0)), int(std::ceil(m.y0)), int(std::floor(m.x1)), int(std::floor(m.y1))};
                for (int y = r.y0; y < r.y1; ++y)
                    for (int x = r.x0; x < r.x1; ++x) add({x, y});
            }
            std::vector<Correspondence> pts;
            std::vector<std::pair<bool, std::size_t>> origin;  // (from st, entry index)
            if (problem.use_complete) {
                for (const Point p : sources) {
                    const std::size_t i = s_valid.index(p);
                    pts.push_back({{double(p.x), double(p.y)},
                                   {double(st.entries()[i].target.x), double(st.entries()[i].target.y)}});
                    origin.push_back({true, i});
                }
            }
            for (std::size_t i = 0; i < ts.size(); ++i) {
                if (!lvl.pinned.empty() && lvl.pinned[i]) continue;
                const Point s = ts.entries()[i].target;
                if (!on[std::size_t(s.y) * std::size_t(lvl.s_ext.width) + std::size_t(s.x)]) continue;
                const Point q = t_valid.at(i);
                pts.push_back({{double(s.x), double(s.y)}, {double(q.x), double(q.y)}});
                origin.push_back({false, i});
            }
            CounterRng rng(schedule.seed, kModelStream, std::uint64_t(lvl.index), std::uint64_t(iteration), k);
            const ModelFit fit = fit_and_project_model(pts, m, schedule.ransac, rng);
            if (!fit.ok) continue;
            auto rounded = [&](std::size_t j) {
                return t_valid.clamp({int(std::lround(fit.projected[j].x)), int(std::lround(fit.projected[j].y))});
            };
            // An output coordinate q matched to a model pixel s is moved to its
            // projection q'. The old coordinate takes the source patch displaced
            // by the same amount, so the neighborhood follows the structure.
            for (std::size_t j = 0; j < pts.size(); ++j) {
                if (origin[j].first) continue;
                const std::size_t qi = origin[j].second;
                const Point q = t_valid.at(qi), moved = rounded(j);
                if (moved == q) continue;
                const Point s{int(pts[j].source.x), int(pts[j].source.y)};
                const Point back = s_valid.clamp(s - (moved - q));
                if (tc && !tc->allows(q, back)) continue;
                ts.entries()[qi] = {back, m_ts(q, back, kInfinity)};
            }
            for (std::size_t j = 0; j < pts.size(); ++j) {
                const Point moved = rounded(j);
                if (origin[j].first) {
                    NnfEntry& e = st.entries()[origin[j].second];
                    if (e.target == moved) continue;
                    if (st_constraints() && !st_constraints()->allows(s_valid.at(origin[j].second), moved)) continue;
                    e = {moved, m_st(s_valid.at(origin[j].second), moved, kInfinity)};
                } else {
                    const std::size_t qi = t_valid.index(moved);
                    if (qi == origin[j].second) continue;
                    if (!lvl.pinned.empty() && lvl.pinned[qi]) continue;
                    const Point s{int(pts[j].source.x), int(pts[j].source.y)};
                    if (tc && !tc->allows(moved, s)) continue;
                    ts.entries()[qi] = {s, m_ts(moved, s, kInfinity)};
                }
            }
        }
    }

    void run_iterations(int n, bool gradual) {
        const int levels = int(s_levels.size());
        for (int it = 0; it < n; ++it) {
            const ImageBuffer T_match = convert(T, schedule.space);
            const SsdMetric m_ts{&T_match, &lvl.S_match, geom.size()};
            const SsdMetric m_st{&lvl.S_match, &T_match, geom.size()};
            SearchParams sp;
            sp.alpha = 0.5;
            sp.w = lvl.radius;
            sp.threads = schedule.threads;
            refresh_distances(ts, m_ts, schedule.threads);
            if (problem.use_complete) refresh_distances(st, m_st, schedule.threads);
            for (int s = 0; s < schedule.search_iterations; ++s) {
                const int sweep = int(sweep_counter++);
                sp.seed = derive_seed(schedule.seed, kFieldTs, std::uint64_t(lvl.index), std::uint64_t(sweep));
                sweep_field(ts, m_ts, sp, sweep, ts_constraints());
                if (problem.use_complete) {
                    sp.seed = derive_seed(schedule.seed, kFieldSt, std::uint64_t(lvl.index), std::uint64_t(sweep));
                    sweep_field(st, m_st, sp, sweep, st_constraints());
                }
            }
            searched = true;
            BdsScore score;
            score.cohere = ts.mean_distance();
            score.complete = problem.use_complete ? st.mean_distance() : 0.0;

            project_models(T_match, done);
            ImageBuffer next = vote_and_average(T, problem.use_complete ? &st : nullptr, &ts, lvl.S,
                                                lvl.weights.empty() ? nullptr : &lvl.weights);
            restore_fixed(next);
            T = std::move(next);
            ++done;
            if (observer) {
                EmIterationInfo info;
                info.level = lvl.index;
                info.levels = levels;
                info.iteration = it;
                info.gradual = gradual;
                info.progress = planned > 0 ? std::min(1.0, double(done) / planned) : 1.0;
                info.score = score;
                info.source = &lvl.S;
                info.output = &T;
                info.target_to_source = &ts;
                info.source_to_target = problem.use_complete ? &st : nullptr;
                info.labels_source = lvl.lab_s.empty() ? nullptr : &lvl.lab_s;
                info.labels_target = lvl.lab_t.empty() ? nullptr : &lvl.lab_t;
                observer(info);
            }
        }
    }
};

EmEngine::EmEngine(const EmProblem& problem, const EmSchedule& schedule, const EmObserver& observer)
    : impl_(std::make_unique<Impl>(problem, schedule, observer)) {}
EmEngine::~EmEngine() = default;

int EmEngine::levels() const { return int(impl_->s_levels.size()); }
Extent EmEngine::source_extent(int level) const { return impl_->s_levels.at(std::size_t(level)); }
Extent EmEngine::target_extent(int level) const { return impl_->t_levels.at(std::size_t(level)); }
void EmEngine::plan_extra_iterations(int n) { impl_->planned += n; }

void EmEngine::begin(const ImageBuffer& T) {
    if (impl_->started) throw InvalidArgument("EM already started");
    if (T.channels() != impl_->problem.source->channels()) throw InvalidArgument("channel count mismatch");
    impl_->install(impl_->make_level(0, impl_->s_levels[0], T.extent()), T);
}

void EmEngine::resize_to(Extent e, int iterations) {
    if (!impl_->started) throw InvalidArgument("EM not started");
    replace_output(resize_area(impl_->T, e.width, e.height), iterations);
}

const ImageBuffer& EmEngine::output() const { return impl_->T; }

void EmEngine::replace_output(const ImageBuffer& T, int iterations) {
    if (!impl_->started) throw InvalidArgument("EM not started");
    if (impl_->lvl.index != 0) throw InvalidArgument("gradual steps run at the coarsest level only");
    if (std::min(T.width(), T.height()) < impl_->geom.size()) throw InvalidArgument("output smaller than the patch");
    impl_->install(impl_->make_level(0, impl_->s_levels[0], T.extent()), T);
    impl_->run_iterations(iterations, true);
}

ImageBuffer EmEngine::finish() {
    Impl& m = *impl_;
    if (!m.started) throw InvalidArgument("EM not started");
    if (m.T.extent() != m.t_levels[0]) throw InvalidArgument("output has not reached the coarsest level's extent");
    const int L = levels();
    m.run_iterations(m.schedule.iterations_at(0, L), false);
    for (int k = 1; k < L; ++k) {
        const ImageBuffer up = resize_bilinear(m.T, m.t_levels[std::size_t(k)].width, m.t_levels[std::size_t(k)].height);
        m.install(m.make_level(k, m.s_levels[std::size_t(k)], m.t_levels[std::size_t(k)]), up);
        m.run_iterations(m.schedule.iterations_at(k, L), false);
    }
    return m.T;
}

}  // namespace detail

ImageBuffer em_optimize(const ImageBuffer& S, const ImageBuffer& T0, const EmSchedule& schedule,
                        const ConstraintSet& constraints, const EmObserver& observer) {
    if (T0.channels() != S.channels()) throw InvalidArgument("channel count mismatch");
    detail::EmProblem p;
    p.source = &S;
    p.target = T0.extent();
    p.constraints = &constraints;
    if (!constraints.hard.empty()) p.fixed_values = &T0;
    detail::EmEngine engine(p, schedule, observer);
    const Extent e0 = engine.target_extent(0);
    engine.begin(T0.extent() == e0 ? T0 : resize_area(T0, e0.width, e0.height));
    return engine.finish();
}

}  // namespace pm
