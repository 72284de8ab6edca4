#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include "pm/core/error.hpp"

namespace pm {

struct Point {
    int x = 0;
    int y = 0;

    friend constexpr bool operator==(Point, Point) = default;
    friend constexpr Point operator+(Point a, Point b) { return {a.x + b.x, a.y + b.y}; }
    friend constexpr Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }
};

/// Half-open integer rectangle [x0, x1) x [y0, y1).
struct Rect {
    int x0 = 0;
    int y0 = 0;
    int x1 = 0;
    int y1 = 0;

    constexpr int width() const { return std::max(0, x1 - x0); }
    constexpr int height() const { return std::max(0, y1 - y0); }
    constexpr std::size_t area() const { return std::size_t(width()) * std::size_t(height()); }
    constexpr bool empty() const { return width() == 0 || height() == 0; }
    constexpr bool contains(Point p) const { return p.x >= x0 && p.x < x1 && p.y >= y0 && p.y < y1; }
    constexpr Point clamp(Point p) const {
        return {std::clamp(p.x, x0, x1 - 1), std::clamp(p.y, y0, y1 - 1)};
    }
    /// Raster index of `p` relative to this rectangle.
    constexpr std::size_t index(Point p) const {
        return std::size_t(p.y - y0) * std::size_t(width()) + std::size_t(p.x - x0);
    }
    constexpr Point at(std::size_t i) const {
        return {x0 + int(i % std::size_t(width())), y0 + int(i / std::size_t(width()))};
    }

    friend constexpr bool operator==(const Rect&, const Rect&) = default;
};

struct Extent {
    int width = 0;
    int height = 0;

    friend constexpr bool operator==(Extent, Extent) = default;
};

enum class ColorSpace { SRGB, LinearRGB, Lab };

/// Row-major interleaved float image. Samples of an sRGB or linear image are
/// in [0, 1]; Lab images carry L in [0, 100].
class ImageBuffer {
public:
    ImageBuffer() = default;
    ImageBuffer(int width, int height, int channels, ColorSpace space = ColorSpace::SRGB,
                float fill = 0.0f)
        : width_(width), height_(height), channels_(channels), space_(space) {
        if (width < 0 || height < 0)
            throw InvalidArgument("image dimensions must be non-negative");
        if (channels < 1 || channels > 4)
            throw InvalidArgument("image must have 1 to 4 channels");
        data_.assign(std::size_t(width) * std::size_t(height) * std::size_t(channels), fill);
    }

    int width() const { return width_; }
    int height() const { return height_; }
    int channels() const { return channels_; }
    Extent extent() const { return {width_, height_}; }
    ColorSpace space() const { return space_; }
    void set_space(ColorSpace s) { space_ = s; }
    bool empty() const { return data_.empty(); }
    std::size_t pixel_count() const { return std::size_t(width_) * std::size_t(height_); }
    std::size_t byte_size() const { return data_.size() * sizeof(float); }

    bool contains(Point p) const { return p.x >= 0 && p.y >= 0 && p.x < width_ && p.y < height_; }
    bool same_shape(const ImageBuffer& o) const {
        return width_ == o.width_ && height_ == o.height_ && channels_ == o.channels_;
    }

    float* pixel(int x, int y) {
        return data_.data() + (std::size_t(y) * std::size_t(width_) + std::size_t(x)) * std::size_t(channels_);
    }
    const float* pixel(int x, int y) const {
        return data_.data() + (std::size_t(y) * std::size_t(width_) + std::size_t(x)) * std::size_t(channels_);
    }
    float& at(int x, int y, int c) { return pixel(x, y)[c]; }
    float at(int x, int y, int c) const { return pixel(x, y)[c]; }

    std::span<float> data() { return data_; }
    std::span<const float> data() const { return data_; }

    friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;

private:
    int width_ = 0;
    int height_ = 0;
    int channels_ = 0;
    ColorSpace space_ = ColorSpace::SRGB;
    std::vector<float> data_;
};

/// Copy of the rectangle `r` of `img`.
ImageBuffer crop(const ImageBuffer& img, const Rect& r);

/// Single-channel luminance-like average of the color channels.
ImageBuffer to_gray(const ImageBuffer& img);

/// Mean absolute per-sample difference, in the images' native units.
double mean_abs_diff(const ImageBuffer& a, const ImageBuffer& b);

/// Root-mean-square per-sample difference, in the images' native units.
double rms_diff(const ImageBuffer& a, const ImageBuffer& b);

}  // namespace pm
