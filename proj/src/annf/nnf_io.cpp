#include "pm/annf/nnf_io.hpp"

#include <limits>

#include "pm/core/binary_io.hpp"

namespace pm {

std::vector<std::uint8_t> encode_nnf(const Nnf& f) {
    ByteWriter w;
    w.reserve(14 + f.size() * 8);
    w.magic("NNF1");
    w.u32(std::uint32_t(f.source_extent().width));
    w.u32(std::uint32_t(f.source_extent().height));
    w.u16(std::uint16_t(f.geom().size()));
    const Rect src = f.source_rect();
    for (std::size_t i = 0; i < f.size(); ++i) {
        const NnfEntry& e = f.entries()[i];
        const Point d = e.target - src.at(i);
        w.i16(std::int16_t(d.x));
        w.i16(std::int16_t(d.y));
        w.f32(float(e.dist));
    }
    return w.take();
}

Nnf decode_nnf(std::span<const std::uint8_t> bytes, Extent target_extent) {
    ByteReader r(bytes);
    r.expect_magic("NNF1");
    const Extent source{int(r.u32()), int(r.u32())};
    const int patch = r.u16();
    if (patch < 1 || patch % 2 == 0) throw InputError("NNF dump: invalid patch size");
    Nnf f(source, target_extent, PatchGeometry(patch));
    const Rect src = f.source_rect();
    const Rect dst = f.target_rect();
    if (r.remaining() != f.size() * 8) throw InputError("NNF dump: entry count does not match header");
    for (std::size_t i = 0; i < f.size(); ++i) {
        const Point d{r.i16(), r.i16()};
        const Point t = src.at(i) + d;
        if (!dst.contains(t)) throw InputError("NNF dump: target outside the target image");
        f.entries()[i] = {t, double(r.f32())};
    }
    return f;
}

void write_nnf(const std::string& path, const Nnf& f) { write_binary_file(path, encode_nnf(f)); }

Nnf read_nnf(const std::string& path, Extent target_extent) {
    return decode_nnf(read_binary_file(path), target_extent);
}

}  // namespace pm
