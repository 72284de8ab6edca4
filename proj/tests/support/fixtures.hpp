#pragma once

// Synthetic image fixtures shared by the unit and acceptance suites.

#include <cstdint>
#include <filesystem>
#include <string>

#include "pm/core/image.hpp"

namespace pm::testing {

ImageBuffer constant_image(int w, int h, int channels, float value);
ImageBuffer white_noise(int w, int h, int channels, std::uint64_t seed);
/// Smooth multi-octave value noise in [0, 1].
ImageBuffer value_noise(int w, int h, int channels, std::uint64_t seed, int base_cell = 16, int octaves = 4);
/// Value noise plus random rectangles, disks and stripes: a stand-in for a
/// natural photograph with edges and texture.
ImageBuffer natural_scene(int w, int h, std::uint64_t seed);
/// Periodic image built by tiling a random tile of size tw x th.
ImageBuffer periodic_tiling(int w, int h, int tw, int th, std::uint64_t seed);
/// Staggered brick courses with mortar joints and per-brick color jitter.
ImageBuffer brick_wall(int w, int h, std::uint64_t seed, int brick_w = 16, int brick_h = 8);
/// Two noise textures (reddish above, bluish below) split by the line
/// y = y0 + slope * x, with antialiased coverage along the boundary.
ImageBuffer split_scene(int w, int h, double y0, double slope, std::uint64_t seed);
/// Image content translated by (dx, dy); uncovered pixels are filled from
/// `fill_seed` noise.
ImageBuffer shifted(const ImageBuffer& img, int dx, int dy, std::uint64_t fill_seed = 99);
/// A similar pair: B is A shifted by a few pixels with one object moved and
/// mild noise added.
std::pair<ImageBuffer, ImageBuffer> similar_pair(int w, int h, std::uint64_t seed);
ImageBuffer add_gaussian_noise(const ImageBuffer& img, double sigma, std::uint64_t seed, bool clamp = true);
double psnr(const ImageBuffer& reference, const ImageBuffer& test);
/// Pastes `src` into `dst` with its top-left corner at (x, y).
void paste(ImageBuffer& dst, const ImageBuffer& src, int x, int y);

/// Counter-clockwise quarter turn: out(H-1-y, x) = img(x, y).
ImageBuffer rotate90(const ImageBuffer& img);
/// Bilinear warp of `src` by rotation `theta` and `scale` about its center,
/// composited onto `canvas` centered at `at`. Pixels outside the warped
/// source keep the canvas value.
void composite_similarity(ImageBuffer& canvas, const ImageBuffer& src, double theta, double scale, double at_x,
                          double at_y);

/// Fresh empty directory under the system temp dir.
std::filesystem::path temp_dir(const std::string& name);

}  // namespace pm::testing
