#pragma once

#include <cmath>
#include <cstdint>

#include "pm/core/error.hpp"
#include "pm/core/geometry.hpp"

namespace pm {

// One 64-bit word per correspondence: x in bits 0-11, y in 12-23, image
// index in 24-39, quantized distance in 40-63.

inline constexpr int kWebCoordMax = 4095;
inline constexpr int kWebImageMax = 65535;
inline constexpr std::uint32_t kWebDistMax = (1u << 24) - 1;
/// Unassigned entry: every bit set, i.e. (4095, 4095, 65535, max).
inline constexpr std::uint64_t kWebSentinel = ~std::uint64_t(0);

struct WebEntry {
    int x = 0;
    int y = 0;
    int image = 0;
    std::uint32_t dist = 0;  // quantized

    Point target() const { return {x, y}; }
    friend bool operator==(const WebEntry&, const WebEntry&) = default;
};

/// `dist` above 2^24 - 1 saturates. Throws InvalidArgument for coordinates
/// or image indices outside their bit fields.
inline std::uint64_t pack_web_entry(int x, int y, int image, std::uint64_t dist) {
    if (x < 0 || x > kWebCoordMax || y < 0 || y > kWebCoordMax)
        throw InvalidArgument("web entry coordinate outside [0, 4095]");
    if (image < 0 || image > kWebImageMax) throw InvalidArgument("web entry image index outside [0, 65535]");
    const std::uint64_t q = dist > kWebDistMax ? kWebDistMax : dist;
    return std::uint64_t(x) | std::uint64_t(y) << 12 | std::uint64_t(image) << 24 | q << 40;
}

inline std::uint64_t pack_web_entry(const WebEntry& e) { return pack_web_entry(e.x, e.y, e.image, e.dist); }

inline WebEntry unpack_web_entry(std::uint64_t w) {
    return {int(w & 0xFFF), int((w >> 12) & 0xFFF), int((w >> 24) & 0xFFFF), std::uint32_t(w >> 40)};
}

/// Largest possible patch SSD for samples in [0, 1].
inline double web_max_distance(const PatchGeometry& geom, int channels) { return double(geom.area()) * channels; }

/// round(min(d, dmax) * (2^24 - 1) / dmax); monotone in d.
inline std::uint32_t quantize_distance(double d, double dmax) {
    if (!(d > 0.0)) return 0;
    if (d >= dmax) return kWebDistMax;
    return std::uint32_t(std::lround(d * double(kWebDistMax) / dmax));
}

inline double dequantize_distance(std::uint32_t q, double dmax) { return double(q) * dmax / double(kWebDistMax); }

}  // namespace pm
