#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pm/annf/nnf.hpp"

namespace pm {

// "NNF1" dump: u32 width, u32 height (source image), u16 patch size, then one
// (i16 dx, i16 dy, f32 distance) record per valid source center in raster
// order, offset = target - center. All little-endian.

std::vector<std::uint8_t> encode_nnf(const Nnf& f);

/// Rebuilds a field; the target extent is not stored in the dump and must be
/// supplied. Throws InputError on malformed data or out-of-range targets.
Nnf decode_nnf(std::span<const std::uint8_t> bytes, Extent target_extent);

void write_nnf(const std::string& path, const Nnf& f);
Nnf read_nnf(const std::string& path, Extent target_extent);

}  // namespace pm
