#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "pm/core/image.hpp"

namespace pm {

/// Whole-file byte IO. Failing to open for reading is an InputError.
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// Decodes a PNG or JPEG file to float samples in [0, 1], tagged sRGB.
/// Gray files give one channel; alpha is kept as a fourth channel.
ImageBuffer load_image(const std::filesystem::path& path);

/// Same as load_image, from an in-memory encoded file.
ImageBuffer decode_image(std::span<const std::uint8_t> bytes);

/// 8-bit sRGB PNG encoding. Linear and Lab images are converted first.
std::vector<std::uint8_t> encode_png(const ImageBuffer& img);
void save_png(const std::filesystem::path& path, const ImageBuffer& img);

/// Single-channel mask: nonzero where the file's alpha (if present) or gray
/// value is nonzero.
std::vector<std::uint8_t> load_mask(const std::filesystem::path& path, Extent expected);
std::vector<std::uint8_t> decode_mask(std::span<const std::uint8_t> bytes, Extent expected);

/// Indexed label map: black is 0, each distinct other color gets labels
/// 1, 2, ... in order of first appearance in raster order.
std::vector<int> load_labels(const std::filesystem::path& path, Extent expected);
std::vector<int> decode_labels(std::span<const std::uint8_t> bytes, Extent expected);

/// Writes a binary mask (nonzero = white) as an 8-bit gray PNG.
void save_mask_png(const std::filesystem::path& path, std::span<const std::uint8_t> mask, Extent e);

}  // namespace pm
