#include "pm/core/pyramid.hpp"

#include <cmath>

namespace pm {

namespace {

struct Tap {
    int index;
    float weight;
};

// For each output sample, the input samples it covers with their area weights.
std::vector<std::vector<Tap>> area_taps(int in, int out) {
    std::vector<std::vector<Tap>> taps(static_cast<std::size_t>(out));
    const double scale = double(in) / double(out);
    for (int i = 0; i < out; ++i) {
        const double lo = i * scale;
        const double hi = (i + 1) * scale;
        for (int j = int(std::floor(lo)); j < int(std::ceil(hi)) && j < in; ++j) {
            const double overlap = std::min(hi, double(j + 1)) - std::max(lo, double(j));
            if (overlap > 1e-12) taps[std::size_t(i)].push_back({j, float(overlap / scale)});
        }
    }
    return taps;
}

}  // namespace

ImageBuffer resize_area(const ImageBuffer& img, int width, int height) {
    if (width < 1 || height < 1) throw InvalidArgument("resize: target dimensions must be positive");
    if (width == img.width() && height == img.height()) return img;
    const int ch = img.channels();
    const auto tx = area_taps(img.width(), width);
    const auto ty = area_taps(img.height(), height);

    ImageBuffer horiz(width, img.height(), ch, img.space());
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < width; ++x) {
            float* o = horiz.pixel(x, y);
            for (const Tap& t : tx[std::size_t(x)]) {
                const float* p = img.pixel(t.index, y);
                for (int c = 0; c < ch; ++c) o[c] += t.weight * p[c];
            }
        }
    }
    ImageBuffer out(width, height, ch, img.space());
    for (int y = 0; y < height; ++y) {
        for (const Tap& t : ty[std::size_t(y)]) {
            for (int x = 0; x < width; ++x) {
                const float* p = horiz.pixel(x, t.index);
                float* o = out.pixel(x, y);
                for (int c = 0; c < ch; ++c) o[c] += t.weight * p[c];
            }
        }
    }
    return out;
}

ImageBuffer resize_bilinear(const ImageBuffer& img, int width, int height) {
    if (width < 1 || height < 1) throw InvalidArgument("resize: target dimensions must be positive");
    if (width == img.width() && height == img.height()) return img;
    const int ch = img.channels();
    ImageBuffer out(width, height, ch, img.space());
    const double sx = double(img.width()) / width;
    const double sy = double(img.height()) / height;
    for (int y = 0; y < height; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, double(img.height() - 1));
        const int y0 = int(fy);
        const int y1 = std::min(y0 + 1, img.height() - 1);
        const float wy = float(fy - y0);
        for (int x = 0; x < width; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, double(img.width() - 1));
            const int x0 = int(fx);
            const int x1 = std::min(x0 + 1, img.width() - 1);
            const float wx = float(fx - x0);
            float* o = out.pixel(x, y);
            for (int c = 0; c < ch; ++c) {
                const float top = img.at(x0, y0, c) * (1 - wx) + img.at(x1, y0, c) * wx;
                const float bot = img.at(x0, y1, c) * (1 - wx) + img.at(x1, y1, c) * wx;
                o[c] = top * (1 - wy) + bot * wy;
            }
        }
    }
    return out;
}

std::vector<Extent> pyramid_extents(Extent full, double factor, int min_dim) {
    if (!(factor > 0.0 && factor < 1.0)) throw InvalidArgument("pyramid factor must lie in (0, 1)");
    if (min_dim < 1) throw InvalidArgument("pyramid minimum dimension must be positive");
    if (std::min(full.width, full.height) < min_dim)
        throw InvalidArgument("image smaller than the pyramid minimum dimension");
    std::vector<Extent> levels{full};
    for (int k = 1;; ++k) {
        const double s = std::pow(factor, k);
        const Extent e{int(std::lround(full.width * s)), int(std::lround(full.height * s))};
        if (std::min(e.width, e.height) < min_dim || e == levels.back()) break;
        levels.push_back(e);
    }
    return {levels.rbegin(), levels.rend()};
}

std::vector<ImageBuffer> build_pyramid(const ImageBuffer& img, double factor, int min_dim) {
    const auto extents = pyramid_extents(img.extent(), factor, min_dim);
    std::vector<ImageBuffer> levels;
    levels.reserve(extents.size());
    for (const Extent& e : extents) levels.push_back(resize_area(img, e.width, e.height));
    return levels;
}

}  // namespace pm
