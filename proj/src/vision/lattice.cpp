#include "pm/vision/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "pm/core/error.hpp"
#include "pm/core/rng.hpp"
#include "pm/gpm/descriptor.hpp"
#include "self_knn.hpp"

namespace pm {

void LatticeParams::validate() const {
    if (k < 1) throw InvalidArgument("k must be >= 1");
    if (ransac_iterations < 1) throw InvalidArgument("RANSAC iterations must be >= 1");
    if (!(inlier_threshold > 0.0)) throw InvalidArgument("inlier threshold must be positive");
    if (!(min_inlier_fraction > 0.0 && min_inlier_fraction <= 1.0))
        throw InvalidArgument("minimum inlier fraction must lie in (0, 1]");
    if (max_coefficient < 1) throw InvalidArgument("maximum lattice coefficient must be >= 1");
    search.validate();
}

using Vec = std::array<double, 2>;

namespace {

double dot(Vec a, Vec b) { return a[0] * b[0] + a[1] * b[1]; }
double cross(Vec a, Vec b) { return a[0] * b[1] - a[1] * b[0]; }

struct Basis {
    Vec v1, v2;
    double det;
};

// Integer coordinates (a, b) of the lattice point nearest to o (by rounding
// the real coordinates, exact for reduced bases up to a neighbor check).
bool nearest_coeffs(const Basis& B, Vec o, int max_coef, double tol, int& a, int& b) {
    const double fa = cross(o, B.v2) / B.det;
    const double fb = cross(B.v1, o) / B.det;
    const int ra = int(std::lround(fa)), rb = int(std::lround(fb));
    double best = 1e300;
    for (int da = -1; da <= 1; ++da)
        for (int db = -1; db <= 1; ++db) {
            const int ca = ra + da, cb = rb + db;
            const double ex = o[0] - ca * B.v1[0] - cb * B.v2[0], ey = o[1] - ca * B.v1[1] - cb * B.v2[1];
            const double d2 = ex * ex + ey * ey;
            if (d2 < best) best = d2, a = ca, b = cb;
        }
    return best <= tol * tol && std::abs(a) <= max_coef && std::abs(b) <= max_coef && (a != 0 || b != 0);
}

}  // namespace

std::pair<Vec, Vec> reduce_basis(Vec v1, Vec v2) {
    if (std::abs(cross(v1, v2)) < 1e-12) throw InvalidArgument("basis vectors are collinear");
    for (int guard = 0; guard < 1000; ++guard) {
        if (dot(v1, v1) > dot(v2, v2)) std::swap(v1, v2);
        const double m = std::round(dot(v1, v2) / dot(v1, v1));
        if (m == 0.0) break;
        v2 = {v2[0] - m * v1[0], v2[1] - m * v1[1]};
    }
    if (dot(v1, v1) > dot(v2, v2)) std::swap(v1, v2);
    const double eps = 1e-3 * std::sqrt(dot(v1, v1));
    if (v1[0] < -eps || (std::abs(v1[0]) <= eps && v1[1] < 0)) v1 = {-v1[0], -v1[1]};
    if (cross(v1, v2) < 0) v2 = {-v2[0], -v2[1]};
    return {v1, v2};
}

std::optional<LatticeResult> detect_lattice(const ImageBuffer& img, const PatchGeometry& geom,
                                            const LatticeParams& params) {
    params.validate();
    const Rect valid = geom.valid_rect(img);
    if (valid.empty()) throw InvalidArgument("image smaller than patch");
    const DescriptorField desc = standardized_patch_descriptors(to_gray(img), geom);
    auto metric = [&](Point a, Point b, double bound) { return descriptor_ssd(desc.at(a), desc.at(b), bound); };
    const KnnField knn = detail::self_knn(img.extent(), geom, params.k, geom.size(), metric, params.search);

    // Pool the offsets; distinct offsets carry their multiplicity.
    std::map<std::pair<int, int>, std::size_t> pooled;
    std::size_t total = 0;
    for (std::size_t i = 0; i < valid.area(); ++i) {
        const Point z = valid.at(i);
        for (const NnfEntry& e : knn.heap(i)) {
            if (!std::isfinite(e.dist)) continue;
            ++pooled[{e.target.x - z.x, e.target.y - z.y}];
            ++total;
        }
    }
    if (pooled.size() < 2) return std::nullopt;
    std::vector<Vec> offs;
    std::vector<double> cumulative;
    std::vector<std::size_t> counts;
    double run = 0;
    for (const auto& [o, n] : pooled) {
        offs.push_back({double(o.first), double(o.second)});
        counts.push_back(n);
        cumulative.push_back(run += double(n));
    }
    CounterRng rng(params.search.seed, 0x1a77);
    auto draw = [&] {
        const double u = rng.uniform(0.0, run);
        return std::size_t(std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
    };
    auto score = [&](const Basis& B) {
        std::size_t in = 0;
        int a = 0, b = 0;
        for (std::size_t i = 0; i < offs.size(); ++i)
            if (nearest_coeffs(B, offs[i], params.max_coefficient, params.inlier_threshold, a, b)) in += counts[i];
        return in;
    };

    const double min_len = geom.size();
    std::optional<Basis> best;
    std::size_t best_in = 0;
    for (int it = 0; it < params.ransac_iterations; ++it) {
        const std::size_t i = std::min(draw(), offs.size() - 1), j = std::min(draw(), offs.size() - 1);
        if (i == j) continue;
        Vec v1 = offs[i], v2 = offs[j];
        if (std::abs(cross(v1, v2)) < 1e-9) continue;
        std::tie(v1, v2) = reduce_basis(v1, v2);
        // Lattices finer than a patch would explain any offset field.
        if (std::sqrt(dot(v1, v1)) < min_len) continue;
        const Basis B{v1, v2, cross(v1, v2)};
        const std::size_t in = score(B);
        if (in > best_in) best_in = in, best = B;
    }
    if (!best || double(best_in) < params.min_inlier_fraction * double(total)) return std::nullopt;

    // Least-squares refinement with the integer coordinates held fixed.
    Basis B = *best;
    for (int round = 0; round < 2; ++round) {
        double saa = 0, sab = 0, sbb = 0, sax = 0, say = 0, sbx = 0, sby = 0;
        int a = 0, b = 0;
        for (std::size_t i = 0; i < offs.size(); ++i) {
            if (!nearest_coeffs(B, offs[i], params.max_coefficient, params.inlier_threshold, a, b)) continue;
            const double w = double(counts[i]);
            saa += w * a * a, sab += w * a * b, sbb += w * b * b;
            sax += w * a * offs[i][0], say += w * a * offs[i][1];
            sbx += w * b * offs[i][0], sby += w * b * offs[i][1];
        }
        const double det = saa * sbb - sab * sab;
        if (std::abs(det) < 1e-9) break;
        const Vec v1{(sbb * sax - sab * sbx) / det, (sbb * say - sab * sby) / det};
        const Vec v2{(saa * sbx - sab * sax) / det, (saa * sby - sab * say) / det};
        if (std::abs(cross(v1, v2)) < 1e-9) break;
        B = {v1, v2, cross(v1, v2)};
    }
    auto [v1, v2] = reduce_basis(B.v1, B.v2);
    B = {v1, v2, cross(v1, v2)};

    LatticeResult res;
    res.v1 = v1;
    res.v2 = v2;
    res.inlier_fraction = double(score(B)) / double(total);
    res.inlier_mask.assign(img.pixel_count(), 0);
    int a = 0, b = 0;
    for (std::size_t i = 0; i < valid.area(); ++i) {
        const Point z = valid.at(i);
        int fit = 0, n = 0;
        for (const NnfEntry& e : knn.heap(i)) {
            if (!std::isfinite(e.dist)) continue;
            ++n;
            fit += nearest_coeffs(B, {double(e.target.x - z.x), double(e.target.y - z.y)}, params.max_coefficient,
                                  params.inlier_threshold, a, b);
        }
        if (n > 0 && 2 * fit > n) res.inlier_mask[std::size_t(z.y) * std::size_t(img.width()) + std::size_t(z.x)] = 1;
    }
    return res;
}

}  // namespace pm
