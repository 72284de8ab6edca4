#pragma once

#include <array>

#include "pm/core/image.hpp"

namespace pm {

// sRGB transfer curve, per sample in [0, 1].
float srgb_to_linear(float v);
float linear_to_srgb(float v);

/// CIELab (D65 white) of a linear-RGB triple.
std::array<double, 3> linear_rgb_to_lab(double r, double g, double b);
std::array<double, 3> lab_to_linear_rgb(double L, double a, double b);

/// Converts a 3-channel sRGB or linear image to CIELab. Gray images are
/// expanded to three equal channels first.
ImageBuffer to_lab(const ImageBuffer& img);

/// Converts any supported image to the given space. Lab requires 3 channels.
ImageBuffer convert(const ImageBuffer& img, ColorSpace target);

}  // namespace pm
