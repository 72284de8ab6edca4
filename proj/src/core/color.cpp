#include "pm/core/color.hpp"

#include <algorithm>
#include <cmath>

namespace pm {

namespace {

// sRGB primaries, D65.
constexpr double kRgbToXyz[3][3] = {
    {0.4124564, 0.3575761, 0.1804375},
    {0.2126729, 0.7151522, 0.0721750},
    {0.0193339, 0.1191920, 0.9503041},
};
constexpr double kXyzToRgb[3][3] = {
    {3.2404542, -1.5371385, -0.4985314},
    {-0.9692660, 1.8760108, 0.0415560},
    {0.0556434, -0.2040259, 1.0572252},
};
// Reference white = image of linear (1,1,1), so white maps to a = b = 0.
constexpr double kWhite[3] = {
    kRgbToXyz[0][0] + kRgbToXyz[0][1] + kRgbToXyz[0][2],
    kRgbToXyz[1][0] + kRgbToXyz[1][1] + kRgbToXyz[1][2],
    kRgbToXyz[2][0] + kRgbToXyz[2][1] + kRgbToXyz[2][2],
};
constexpr double kDelta = 6.0 / 29.0;

double lab_f(double t) {
    return t > kDelta * kDelta * kDelta ? std::cbrt(t) : t / (3.0 * kDelta * kDelta) + 4.0 / 29.0;
}
double lab_f_inv(double t) {
    return t > kDelta ? t * t * t : 3.0 * kDelta * kDelta * (t - 4.0 / 29.0);
}

int color_channels(const ImageBuffer& img) { return img.channels() == 4 ? 3 : img.channels(); }

}  // namespace

float srgb_to_linear(float v) {
    return v <= 0.04045f ? v / 12.92f : std::pow((v + 0.055f) / 1.055f, 2.4f);
}

float linear_to_srgb(float v) {
    if (v <= 0.0031308f) return 12.92f * v;
    return 1.055f * std::pow(v, 1.0f / 2.4f) - 0.055f;
}

std::array<double, 3> linear_rgb_to_lab(double r, double g, double b) {
    double xyz[3];
    for (int i = 0; i < 3; ++i)
        xyz[i] = (kRgbToXyz[i][0] * r + kRgbToXyz[i][1] * g + kRgbToXyz[i][2] * b) / kWhite[i];
    const double fx = lab_f(xyz[0]), fy = lab_f(xyz[1]), fz = lab_f(xyz[2]);
    return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

std::array<double, 3> lab_to_linear_rgb(double L, double a, double b) {
    const double fy = (L + 16.0) / 116.0;
    const double f[3] = {fy + a / 500.0, fy, fy - b / 200.0};
    double xyz[3];
    for (int i = 0; i < 3; ++i) xyz[i] = lab_f_inv(f[i]) * kWhite[i];
    std::array<double, 3> rgb{};
    for (int i = 0; i < 3; ++i)
        rgb[std::size_t(i)] = kXyzToRgb[i][0] * xyz[0] + kXyzToRgb[i][1] * xyz[1] + kXyzToRgb[i][2] * xyz[2];
    return rgb;
}

ImageBuffer to_lab(const ImageBuffer& img) {
    if (img.space() == ColorSpace::Lab) return img;
    if (img.channels() == 2) throw InvalidArgument("to_lab: unsupported channel count 2");
    ImageBuffer out(img.width(), img.height(), 3, ColorSpace::Lab);
    const bool gray = img.channels() == 1;
    const bool is_srgb = img.space() == ColorSpace::SRGB;
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            const float* p = img.pixel(x, y);
            float rgb[3] = {p[0], gray ? p[0] : p[1], gray ? p[0] : p[2]};
            if (is_srgb)
                for (float& v : rgb) v = srgb_to_linear(v);
            const auto lab = linear_rgb_to_lab(rgb[0], rgb[1], rgb[2]);
            float* o = out.pixel(x, y);
            for (int c = 0; c < 3; ++c) o[c] = float(lab[std::size_t(c)]);
        }
    }
    return out;
}

ImageBuffer convert(const ImageBuffer& img, ColorSpace target) {
    if (img.space() == target) return img;
    if (target == ColorSpace::Lab) return to_lab(img);

    ImageBuffer out;
    if (img.space() == ColorSpace::Lab) {
        out = ImageBuffer(img.width(), img.height(), 3, target);
        for (int y = 0; y < img.height(); ++y) {
            for (int x = 0; x < img.width(); ++x) {
                const float* p = img.pixel(x, y);
                const auto rgb = lab_to_linear_rgb(p[0], p[1], p[2]);
                float* o = out.pixel(x, y);
                for (int c = 0; c < 3; ++c) {
                    float v = std::clamp(float(rgb[std::size_t(c)]), 0.0f, 1.0f);
                    o[c] = target == ColorSpace::SRGB ? linear_to_srgb(v) : v;
                }
            }
        }
        return out;
    }

    // sRGB <-> linear; alpha passes through untouched.
    out = img;
    out.set_space(target);
    const int colors = color_channels(img);
    const int ch = img.channels();
    auto data = out.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (int(i % std::size_t(ch)) >= colors) continue;
        data[i] = target == ColorSpace::LinearRGB ? srgb_to_linear(data[i]) : linear_to_srgb(data[i]);
    }
    return out;
}

}  // namespace pm
