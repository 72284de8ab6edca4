#include "pm/core/image.hpp"

#include <cmath>

#include "pm/core/distance.hpp"

namespace pm {

ImageBuffer crop(const ImageBuffer& img, const Rect& r) {
    if (r.x0 < 0 || r.y0 < 0 || r.x1 > img.width() || r.y1 > img.height() || r.empty())
        throw InvalidArgument("crop rectangle outside image");
    ImageBuffer out(r.width(), r.height(), img.channels(), img.space());
    const std::size_t row = std::size_t(r.width()) * std::size_t(img.channels());
    for (int y = r.y0; y < r.y1; ++y)
        std::copy_n(img.pixel(r.x0, y), row, out.pixel(0, y - r.y0));
    return out;
}

ImageBuffer to_gray(const ImageBuffer& img) {
    const int colors = img.channels() == 4 ? 3 : img.channels();
    ImageBuffer out(img.width(), img.height(), 1, img.space());
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            const float* p = img.pixel(x, y);
            float s = 0.0f;
            for (int c = 0; c < colors; ++c) s += p[c];
            out.at(x, y, 0) = s / float(colors);
        }
    }
    return out;
}

double mean_abs_diff(const ImageBuffer& a, const ImageBuffer& b) {
    if (!a.same_shape(b)) throw InvalidArgument("image shapes differ");
    double s = 0.0;
    auto da = a.data();
    auto db = b.data();
    for (std::size_t i = 0; i < da.size(); ++i) s += std::abs(double(da[i]) - double(db[i]));
    return da.empty() ? 0.0 : s / double(da.size());
}

double rms_diff(const ImageBuffer& a, const ImageBuffer& b) {
    if (!a.same_shape(b)) throw InvalidArgument("image shapes differ");
    double s = 0.0;
    auto da = a.data();
    auto db = b.data();
    for (std::size_t i = 0; i < da.size(); ++i) {
        const double d = double(da[i]) - double(db[i]);
        s += d * d;
    }
    return da.empty() ? 0.0 : std::sqrt(s / double(da.size()));
}

double patch_distance(const ImageBuffer& A, Point a, const ImageBuffer& B, Point b,
                      const PatchGeometry& geom, double early_stop) {
    if (A.channels() != B.channels())
        throw InvalidArgument("patch_distance: channel counts differ");
    if (!geom.valid_rect(A).contains(a) || !geom.valid_rect(B).contains(b))
        throw InvalidArgument("patch_distance: patch center outside valid rectangle");
    return ssd_unchecked(A, a, B, b, geom.size(), early_stop);
}

}  // namespace pm
