#include "pm/vision/denoise.hpp"

#include <cmath>

#include "pm/core/distance.hpp"
#include "pm/core/error.hpp"
#include "pm/core/parallel.hpp"
#include "self_knn.hpp"

namespace pm {

void DenoiseParams::validate() const {
    if (k < 1) throw InvalidArgument("k must be >= 1");
    if (!(h > 0.0)) throw InvalidArgument("h must be positive");
    search.validate();
}

ImageBuffer nlm_denoise(const ImageBuffer& img, const PatchGeometry& geom, const DenoiseParams& params) {
    params.validate();
    const Rect valid = geom.valid_rect(img);
    if (valid.empty()) throw InvalidArgument("image smaller than patch");
    const SsdMetric metric{&img, &img, geom.size()};
    const KnnField knn = detail::self_knn(img.extent(), geom, params.k, 1, metric, params.search);

    const int c = img.channels();
    const double per_sample = 1.0 / (double(geom.area()) * c);
    const double inv_h2 = 1.0 / (params.h * params.h);
    ImageBuffer out(img.width(), img.height(), c, img.space());
    parallel_rows(0, img.height(), params.search.threads, [&](int y) {
        std::vector<double> acc(static_cast<std::size_t>(c));
        for (int x = 0; x < img.width(); ++x) {
            const Point z{x, y};
            const Point center = valid.clamp(z);
            const Point shift = z - center;
            std::fill(acc.begin(), acc.end(), 0.0);
            double wsum = 0.0;
            auto add = [&](Point t, double w) {
                const float* px = img.pixel(t.x + shift.x, t.y + shift.y);
                for (int k = 0; k < c; ++k) acc[std::size_t(k)] += w * px[k];
                wsum += w;
            };
            if (params.include_self) add(center, 1.0);
            for (const NnfEntry& e : knn.heap(center)) {
                if (!std::isfinite(e.dist)) continue;
                add(e.target, std::exp(-e.dist * per_sample * inv_h2));
            }
            float* o = out.pixel(x, y);
            const float* self = img.pixel(x, y);
            for (int k = 0; k < c; ++k) o[k] = wsum > 0 ? float(acc[std::size_t(k)] / wsum) : self[k];
        }
    });
    return out;
}

}  // namespace pm
