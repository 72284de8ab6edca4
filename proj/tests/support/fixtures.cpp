#include "support/fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "pm/core/rng.hpp"

namespace pm::testing {

ImageBuffer constant_image(int w, int h, int channels, float value) {
    return ImageBuffer(w, h, channels, ColorSpace::SRGB, value);
}

ImageBuffer white_noise(int w, int h, int channels, std::uint64_t seed) {
    ImageBuffer img(w, h, channels);
    CounterRng rng(seed, 0xA0);
    for (float& v : img.data()) v = float(rng.uniform());
    return img;
}

ImageBuffer value_noise(int w, int h, int channels, std::uint64_t seed, int base_cell, int octaves) {
    ImageBuffer img(w, h, channels);
    double amp_total = 0.0;
    double amp = 1.0;
    for (int o = 0; o < octaves; ++o) {
        const int cell = std::max(1, base_cell >> o);
        const int gw = w / cell + 2, gh = h / cell + 2;
        CounterRng rng(seed, 0xB0, std::uint64_t(o));
        std::vector<float> grid(std::size_t(gw) * std::size_t(gh) * std::size_t(channels));
        for (float& g : grid) g = float(rng.uniform());
        auto at = [&](int gx, int gy, int c) {
            return grid[(std::size_t(gy) * std::size_t(gw) + std::size_t(gx)) * std::size_t(channels) + std::size_t(c)];
        };
        for (int y = 0; y < h; ++y) {
            const double fy = double(y) / cell;
            const int y0 = int(fy);
            double ty = fy - y0;
            ty = ty * ty * (3 - 2 * ty);
            for (int x = 0; x < w; ++x) {
                const double fx = double(x) / cell;
                const int x0 = int(fx);
                double tx = fx - x0;
                tx = tx * tx * (3 - 2 * tx);
                for (int c = 0; c < channels; ++c) {
                    const double top = at(x0, y0, c) * (1 - tx) + at(x0 + 1, y0, c) * tx;
                    const double bot = at(x0, y0 + 1, c) * (1 - tx) + at(x0 + 1, y0 + 1, c) * tx;
                    img.at(x, y, c) += float(amp * (top * (1 - ty) + bot * ty));
                }
            }
        }
        amp_total += amp;
        amp *= 0.5;
    }
    for (float& v : img.data()) v = float(v / amp_total);
    return img;
}

ImageBuffer natural_scene(int w, int h, std::uint64_t seed) {
    ImageBuffer img = value_noise(w, h, 3, seed, 24, 5);
    CounterRng rng(seed, 0xC0);
    const int shapes = std::max(6, w * h / 1500);
    for (int s = 0; s < shapes; ++s) {
        const int kind = int(rng.below(3));
        const float col[3] = {float(rng.uniform()), float(rng.uniform()), float(rng.uniform())};
        const int cx = int(rng.below(std::uint64_t(w)));
        const int cy = int(rng.below(std::uint64_t(h)));
        const int r = 4 + int(rng.below(std::uint64_t(std::max(5, std::min(w, h) / 6))));
        const double stripe = 3.0 + rng.uniform(0.0, 6.0);
        for (int y = std::max(0, cy - r); y < std::min(h, cy + r); ++y) {
            for (int x = std::max(0, cx - r); x < std::min(w, cx + r); ++x) {
                bool inside = true;
                float shade = 1.0f;
                if (kind == 1) inside = (x - cx) * (x - cx) + (y - cy) * (y - cy) < r * r;
                if (kind == 2) shade = std::fmod(double(x + y), stripe) < stripe / 2 ? 1.0f : 0.55f;
                if (!inside) continue;
                for (int c = 0; c < 3; ++c) img.at(x, y, c) = 0.3f * img.at(x, y, c) + 0.7f * col[c] * shade;
            }
        }
    }
    return img;
}

ImageBuffer periodic_tiling(int w, int h, int tw, int th, std::uint64_t seed) {
    const ImageBuffer tile = value_noise(tw, th, 3, seed, std::max(2, std::min(tw, th) / 3), 3);
    ImageBuffer img(w, h, 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) img.at(x, y, c) = tile.at(x % tw, y % th, c);
    return img;
}

ImageBuffer brick_wall(int w, int h, std::uint64_t seed, int brick_w, int brick_h) {
    const ImageBuffer grain = value_noise(w, h, 1, seed, 4, 2);
    ImageBuffer img(w, h, 3);
    for (int y = 0; y < h; ++y) {
        const int row = y / brick_h;
        const int shift = (row % 2) * (brick_w / 2);
        for (int x = 0; x < w; ++x) {
            const int col = (x + shift) / brick_w;
            const bool mortar = y % brick_h == 0 || (x + shift) % brick_w == 0;
            CounterRng rng(seed, std::uint64_t(row), std::uint64_t(col), 0xb41c);
            const float jitter = float(rng.uniform(-0.08, 0.08));
            const float g = 0.1f * (grain.at(x, y, 0) - 0.5f);
            const float base[3] = {0.62f, 0.30f, 0.22f};
            for (int c = 0; c < 3; ++c)
                img.at(x, y, c) = mortar ? 0.82f + 0.5f * g : std::clamp(base[c] + jitter + g, 0.0f, 1.0f);
        }
    }
    return img;
}

ImageBuffer split_scene(int w, int h, double y0, double slope, std::uint64_t seed) {
    const ImageBuffer top = value_noise(w, h, 1, seed, 3, 2);
    const ImageBuffer bottom = value_noise(w, h, 1, seed + 1, 3, 2);
    ImageBuffer img(w, h, 3);
    const float up[3] = {0.75f, 0.4f, 0.2f}, down[3] = {0.2f, 0.4f, 0.75f};
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            // Area of the pixel row above the line at the column center.
            const float a = float(std::clamp(y0 + slope * (x + 0.5) - y, 0.0, 1.0));
            const float t = 0.25f * (a * top.at(x, y, 0) + (1 - a) * bottom.at(x, y, 0)) - 0.125f;
            for (int c = 0; c < 3; ++c) img.at(x, y, c) = a * up[c] + (1 - a) * down[c] + t;
        }
    return img;
}

ImageBuffer shifted(const ImageBuffer& img, int dx, int dy, std::uint64_t fill_seed) {
    ImageBuffer out = value_noise(img.width(), img.height(), img.channels(), fill_seed, 12, 3);
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            const int sx = x - dx, sy = y - dy;
            if (!img.contains({sx, sy})) continue;
            for (int c = 0; c < img.channels(); ++c) out.at(x, y, c) = img.at(sx, sy, c);
        }
    }
    return out;
}

std::pair<ImageBuffer, ImageBuffer> similar_pair(int w, int h, std::uint64_t seed) {
    // A wider canvas lets B be a different window onto the same scene.
    const ImageBuffer scene = natural_scene(w + 16, h + 16, seed);
    CounterRng rng(seed, 0xD0);
    const int ax = 8, ay = 8;
    const int bx = 8 + int(rng.below(9)) - 4, by = 8 + int(rng.below(9)) - 4;
    ImageBuffer A = crop(scene, {ax, ay, ax + w, ay + h});
    ImageBuffer B = crop(scene, {bx, by, bx + w, by + h});
    // Move one block inside B.
    const int bw = w / 5, bh = h / 5;
    const int sx = int(rng.below(std::uint64_t(w - bw))), sy = int(rng.below(std::uint64_t(h - bh)));
    const int tx = int(rng.below(std::uint64_t(w - bw))), ty = int(rng.below(std::uint64_t(h - bh)));
    const ImageBuffer block = crop(B, {sx, sy, sx + bw, sy + bh});
    paste(B, block, tx, ty);
    return {A, add_gaussian_noise(B, 2.0 / 255.0, seed + 1)};
}

ImageBuffer add_gaussian_noise(const ImageBuffer& img, double sigma, std::uint64_t seed, bool clamp) {
    ImageBuffer out = img;
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> n(0.0, sigma);
    for (float& v : out.data()) {
        double x = v + n(gen);
        if (clamp) x = std::clamp(x, 0.0, 1.0);
        v = float(x);
    }
    return out;
}

double psnr(const ImageBuffer& reference, const ImageBuffer& test) {
    const double rms = rms_diff(reference, test);
    return 20.0 * std::log10(1.0 / std::max(rms, 1e-12));
}

void paste(ImageBuffer& dst, const ImageBuffer& src, int x, int y) {
    for (int sy = 0; sy < src.height(); ++sy)
        for (int sx = 0; sx < src.width(); ++sx)
            if (dst.contains({x + sx, y + sy}))
                for (int c = 0; c < src.channels(); ++c) dst.at(x + sx, y + sy, c) = src.at(sx, sy, c);
}

ImageBuffer rotate90(const ImageBuffer& img) {
    ImageBuffer out(img.height(), img.width(), img.channels(), img.space());
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
            for (int c = 0; c < img.channels(); ++c) out.at(img.height() - 1 - y, x, c) = img.at(x, y, c);
    return out;
}

void composite_similarity(ImageBuffer& canvas, const ImageBuffer& src, double theta, double scale, double at_x,
                          double at_y) {
    const double cs = std::cos(theta), sn = std::sin(theta);
    const double cx = (src.width() - 1) / 2.0, cy = (src.height() - 1) / 2.0;
    for (int y = 0; y < canvas.height(); ++y) {
        for (int x = 0; x < canvas.width(); ++x) {
            // Inverse map: canvas offset -> rotate by -theta, divide by scale.
            const double u = x - at_x, v = y - at_y;
            const double sx = (cs * u + sn * v) / scale + cx;
            const double sy = (-sn * u + cs * v) / scale + cy;
            if (sx < 0 || sy < 0 || sx > src.width() - 1 || sy > src.height() - 1) continue;
            const int x0 = std::min(int(sx), src.width() - 2), y0 = std::min(int(sy), src.height() - 2);
            const double fx = sx - x0, fy = sy - y0;
            for (int c = 0; c < canvas.channels(); ++c) {
                const double top = src.at(x0, y0, c) * (1 - fx) + src.at(x0 + 1, y0, c) * fx;
                const double bot = src.at(x0, y0 + 1, c) * (1 - fx) + src.at(x0 + 1, y0 + 1, c) * fx;
                canvas.at(x, y, c) = float(top * (1 - fy) + bot * fy);
            }
        }
    }
}

std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("pm_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace pm::testing
