#pragma once

#include "pm/core/image.hpp"

namespace pm {

/// Square patch of odd side length, identified by its center pixel.
class PatchGeometry {
public:
    static constexpr int kDefaultSize = 7;

    constexpr PatchGeometry() = default;
    explicit PatchGeometry(int size) : size_(size) {
        if (size < 1 || size % 2 == 0)
            throw InvalidArgument("patch size must be a positive odd number");
    }

    constexpr int size() const { return size_; }
    constexpr int half() const { return size_ / 2; }
    constexpr int area() const { return size_ * size_; }

    /// Centers whose full patch lies inside a width x height image.
    constexpr Rect valid_rect(int width, int height) const {
        return {half(), half(), width - half(), height - half()};
    }
    constexpr Rect valid_rect(Extent e) const { return valid_rect(e.width, e.height); }
    Rect valid_rect(const ImageBuffer& img) const { return valid_rect(img.width(), img.height()); }

    friend constexpr bool operator==(PatchGeometry, PatchGeometry) = default;

private:
    int size_ = kDefaultSize;
};

}  // namespace pm
