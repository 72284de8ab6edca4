#include "pm/gpm/descriptor.hpp"

#include <algorithm>
#include <cmath>

#include "pm/annf/engine.hpp"

namespace pm {

namespace {

DescriptorField patch_descriptors(const ImageBuffer& img, const PatchGeometry& geom, bool center) {
    const int c = img.channels();
    DescriptorField out(img.extent(), geom, geom.area() * c);
    const Rect r = out.valid_rect();
    const int h = geom.half();
    std::vector<double> mean(static_cast<std::size_t>(c));
    for (int y = r.y0; y < r.y1; ++y) {
        for (int x = r.x0; x < r.x1; ++x) {
            auto d = out.at({x, y});
            std::size_t k = 0;
            for (int dy = -h; dy <= h; ++dy) {
                const float* row = img.pixel(x - h, y + dy);
                for (int i = 0; i < geom.size() * c; ++i) d[k++] = row[i];
            }
            if (!center) continue;
            std::fill(mean.begin(), mean.end(), 0.0);
            for (std::size_t i = 0; i < d.size(); ++i) mean[i % std::size_t(c)] += d[i];
            for (auto& m : mean) m /= geom.area();
            for (std::size_t i = 0; i < d.size(); ++i) d[i] = float(d[i] - mean[i % std::size_t(c)]);
        }
    }
    return out;
}

}  // namespace

DescriptorField raw_patch_descriptors(const ImageBuffer& img, const PatchGeometry& geom) {
    return patch_descriptors(img, geom, false);
}

DescriptorField normalized_patch_descriptors(const ImageBuffer& img, const PatchGeometry& geom) {
    return patch_descriptors(img, geom, true);
}

void standardize(std::span<float> v, double min_std) {
    if (v.empty()) return;
    double mean = 0.0;
    for (const float x : v) mean += x;
    mean /= double(v.size());
    double var = 0.0;
    for (const float x : v) var += (x - mean) * (x - mean);
    const double sd = std::max(min_std, std::sqrt(var / double(v.size())));
    for (float& x : v) x = float((x - mean) / sd);
}

DescriptorField standardized_patch_descriptors(const ImageBuffer& img, const PatchGeometry& geom) {
    DescriptorField out = patch_descriptors(img, geom, false);
    const Rect r = out.valid_rect();
    for (std::size_t i = 0; i < r.area(); ++i) standardize(out.at(r.at(i)));
    return out;
}

double descriptor_ssd(std::span<const float> a, std::span<const float> b, double bound) {
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = double(a[i]) - double(b[i]);
        sum += d * d;
        if ((i & 31) == 31 && sum >= bound) return sum;
    }
    return sum;
}

Nnf match_descriptors(const DescriptorField& A, const DescriptorField& B, const DescriptorDistance& distance,
                      const SearchParams& params, const MatchConstraints* constraints) {
    params.validate();
    if (A.dim() != B.dim()) throw InvalidArgument("descriptor lengths differ");
    if (A.geom() != B.geom()) throw InvalidArgument("descriptor fields use different patch sizes");
    if (!distance) throw InvalidArgument("missing descriptor distance");
    auto metric = [&](Point a, Point b, double bound) { return distance(A.at(a), B.at(b), bound); };
    Nnf f(A.extent(), B.extent(), A.geom(), params.seed);
    init_random_field(f, metric, params.seed, constraints, params.threads);
    for (int i = 0; i < params.iterations; ++i) sweep_field(f, metric, params, i, constraints);
    return f;
}

}  // namespace pm
