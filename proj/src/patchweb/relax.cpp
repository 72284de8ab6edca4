#include <cmath>

#include "pm/core/distance.hpp"
#include "pm/patchweb/web.hpp"

namespace pm {

const WebMember* WorkingSet::find(int index) const {
    for (const auto& m : members)
        if (m.index == index) return &m;
    return nullptr;
}

WebMember* WorkingSet::find(int index) {
    for (auto& m : members)
        if (m.index == index) return &m;
    return nullptr;
}

namespace {

constexpr std::uint64_t kRelaxStream = 0x3eb;
constexpr std::uint64_t kUnassigned = std::uint64_t(kWebDistMax) + 1;

struct Candidate {
    WebMember* member;
    Point target;
};

class Visit {
public:
    Visit(WorkingSet& ws, WebMember& self, Point z, double dmax, RelaxStats& st)
        : ws_(ws), self_(self), z_(z), dmax_(dmax), st_(st), seen_(seen_buffer()) {
        seen_.clear();
        const std::size_t i = self.field.valid_rect().index(z);
        if (self.field.assigned(i)) {
            const WebEntry e = unpack_web_entry(self.field.words()[i]);
            best_ = {ws.find(e.image), e.target()};
            best_q_ = e.dist;
            seen_.push_back({e.image, e.target()});
        }
    }

    bool has_best() const { return best_.member != nullptr; }
    const Candidate& best() const { return best_; }
    std::uint64_t best_q() const { return best_q_; }
    bool improved() const { return improved_; }

    void consider(WebMember* m, Point t) {
        if (!m || m->index == self_.index) return;
        const Key key{m->index, t};
        for (const Key& k : seen_)
            if (k == key) return;
        seen_.push_back(key);
        ++st_.evaluations;
        // Anything at or above this bound quantizes to >= best_q_ + 1.
        const double bound = best_q_ >= kUnassigned ? kInfinity : (double(best_q_) + 0.5) * dmax_ / kWebDistMax;
        const double d = ssd_unchecked(self_.image, z_, m->image, t, self_.field.geom().size(), bound);
        const std::uint32_t q = quantize_distance(d, dmax_);
        if (q >= best_q_) return;
        best_ = {m, t};
        best_q_ = q;
        improved_ = true;
        mirror(m, t, q);
    }

private:
    struct Key {
        int image;
        Point target;
        bool operator==(const Key&) const = default;
    };

    // The same correspondence seen from the target side (symmetric distance).
    void mirror(WebMember* m, Point t, std::uint32_t q) {
        if (!m->writable || self_.index > kWebImageMax) return;
        const std::size_t j = m->field.valid_rect().index(t);
        if (m->field.assigned(j) && m->field.qdist(j) <= q) return;
        m->field.words()[j] = pack_web_entry(z_.x, z_.y, self_.index, q);
        ++st_.mirror_updates;
    }

    WorkingSet& ws_;
    WebMember& self_;
    Point z_;
    double dmax_;
    RelaxStats& st_;
    Candidate best_{nullptr, {}};
    std::uint64_t best_q_ = kUnassigned;
    bool improved_ = false;
    // Reused across visits to avoid an allocation per coordinate.
    static std::vector<Key>& seen_buffer() {
        thread_local std::vector<Key> buffer;
        return buffer;
    }

    std::vector<Key>& seen_;
};

}  // namespace

RelaxStats relax(WorkingSet& ws, const RelaxOptions& opts, int round) {
    if (opts.sweeps < 1) throw InvalidArgument("relax needs at least one sweep");
    if (!(opts.alpha > 0.0 && opts.alpha < 1.0)) throw InvalidArgument("alpha must lie in (0, 1)");
    RelaxStats st;
    for (WebMember& self : ws.members) {
        if (!self.writable) continue;
        std::vector<WebMember*> others;
        for (WebMember& m : ws.members)
            if (m.index != self.index) {
                if (m.image.channels() != self.image.channels())
                    throw InvalidArgument("working-set images have different channel counts");
                others.push_back(&m);
            }
        if (others.empty()) continue;
        std::vector<WebMember*> binned;
        for (WebMember* m : others)
            if (m->bins && !m->bins->empty()) binned.push_back(m);

        const PatchGeometry& geom = self.field.geom();
        const double dmax = web_max_distance(geom, self.image.channels());
        const Rect src = self.field.valid_rect();
        for (int s = 0; s < opts.sweeps; ++s) {
            const int step = s % 2 == 0 ? 1 : -1;
            const int y0 = step > 0 ? src.y0 : src.y1 - 1, y1 = step > 0 ? src.y1 : src.y0 - 1;
            const int x0 = step > 0 ? src.x0 : src.x1 - 1, x1 = step > 0 ? src.x1 : src.x0 - 1;
            for (int y = y0; y != y1; y += step) {
                for (int x = x0; x != x1; x += step) {
                    const Point z{x, y};
                    const std::size_t idx = src.index(z);
                    CounterRng rng(opts.seed, std::uint64_t(self.index), std::uint64_t(round) << 8 | std::uint64_t(s),
                                   idx, kRelaxStream);
                    Visit v(ws, self, z, dmax, st);

                    if (opts.operators & kOpPropagation) {
                        for (const Point d : {Point{step, 0}, Point{0, step}}) {
                            const Point n = z - d;
                            if (!src.contains(n) || !self.field.assigned(src.index(n))) continue;
                            const WebEntry e = unpack_web_entry(self.field.words()[src.index(n)]);
                            WebMember* m = ws.find(e.image);
                            if (m) v.consider(m, m->field.valid_rect().clamp(e.target() + d));
                        }
                    }
                    if ((opts.operators & kOpRandomSearch) && v.has_best() && v.best().member) {
                        WebMember* m = v.best().member;
                        const Point v0 = v.best().target;
                        const Rect r = m->field.valid_rect();
                        for (double radius = std::max(m->image.width(), m->image.height()); radius >= 1.0;
                             radius *= opts.alpha) {
                            const double rx = rng.uniform(-1.0, 1.0), ry = rng.uniform(-1.0, 1.0);
                            v.consider(m, r.clamp({v0.x + int(std::lround(radius * rx)),
                                                   v0.y + int(std::lround(radius * ry))}));
                        }
                    }
                    if ((opts.operators & kOpBinning) && !binned.empty()) {
                        WebMember* m = binned[rng.below(binned.size())];
                        v.consider(m, bin_candidate(*m->bins, self.image, z, rng));
                    }
                    if ((opts.operators & kOpEnrichment) && v.has_best() && v.best().member) {
                        const WebMember* m = v.best().member;
                        const std::size_t j = m->field.valid_rect().index(v.best().target);
                        if (m->field.assigned(j)) {
                            const WebEntry e = unpack_web_entry(m->field.words()[j]);
                            v.consider(ws.find(e.image), e.target());
                        }
                    }
                    if (opts.operators & kOpUniform) {
                        WebMember* m = others[rng.below(others.size())];
                        const Rect r = m->field.valid_rect();
                        v.consider(m, r.at(rng.below(r.area())));
                    }

                    if (v.improved()) {
                        self.field.words()[idx] =
                            pack_web_entry(v.best().target.x, v.best().target.y, v.best().member->index, v.best_q());
                        ++st.updates;
                    }
                }
            }
        }
    }
    return st;
}

}  // namespace pm
