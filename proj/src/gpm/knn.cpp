#include "pm/gpm/knn.hpp"

#include <chrono>

#include "pm/core/binary_io.hpp"

namespace pm {

KnnField::KnnField(Extent source, Extent target, PatchGeometry geom, int k, bool self_matching)
    : source_(source), target_(target), geom_(geom), k_(k), self_matching_(self_matching) {
    if (k < 1) throw InvalidArgument("k must be >= 1");
    entries_.resize(geom.valid_rect(source).area() * std::size_t(k));
}

std::vector<NnfEntry> KnnField::sorted(std::size_t i) const {
    const auto h = heap(i);
    std::vector<NnfEntry> out(h.begin(), h.end());
    std::sort(out.begin(), out.end(), [](const NnfEntry& a, const NnfEntry& b) {
        if (a.dist != b.dist) return a.dist < b.dist;
        return a.target.y != b.target.y ? a.target.y < b.target.y : a.target.x < b.target.x;
    });
    return out;
}

double KnnField::mean_distance() const {
    if (entries_.empty()) return 0.0;
    double s = 0.0;
    for (const auto& e : entries_) s += e.dist;
    return s / double(entries_.size());
}

void KnnParams::validate() const {
    search.validate();
    if (k < 1) throw InvalidArgument("k must be >= 1");
    if (samples_per_neighbor < 1) throw InvalidArgument("samples per neighbor must be >= 1");
}

namespace {

void check_pair(const ImageBuffer& A, const ImageBuffer& B, const PatchGeometry& geom) {
    if (A.channels() != B.channels()) throw InvalidArgument("images have different channel counts");
    if (geom.valid_rect(A).empty() || geom.valid_rect(B).empty())
        throw InvalidArgument("image smaller than patch");
}

}  // namespace

KnnField init_random_knn(const ImageBuffer& A, const ImageBuffer& B, const PatchGeometry& geom,
                         const KnnParams& params) {
    params.validate();
    check_pair(A, B, geom);
    KnnField f(A.extent(), B.extent(), geom, params.k, &A == &B || A == B);
    init_random_knn(f, SsdMetric{&A, &B, geom.size()}, params.search.seed, params.search.threads);
    return f;
}

SweepStats iterate_knn(KnnField& f, const ImageBuffer& A, const ImageBuffer& B, const KnnParams& params,
                       int sweep) {
    params.validate();
    return sweep_knn(f, SsdMetric{&A, &B, f.geom().size()}, params, sweep);
}

KnnField compute_knn(const ImageBuffer& A, const ImageBuffer& B, const PatchGeometry& geom, const KnnParams& params,
                     KnnRunStats* stats) {
    KnnField f = init_random_knn(A, B, geom, params);
    const SsdMetric metric{&A, &B, geom.size()};
    for (int i = 0; i < params.search.iterations; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        const SweepStats s = sweep_knn(f, metric, params, i);
        if (stats) {
            stats->seconds_per_sweep.push_back(
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
            stats->mean_distance_per_sweep.push_back(f.mean_distance());
            stats->peak_aux_bytes = std::max(stats->peak_aux_bytes, f.memory_bytes() + s.aux_bytes);
        }
    }
    return f;
}

KnnField brute_force_knn(const ImageBuffer& A, const ImageBuffer& B, const PatchGeometry& geom, int k) {
    check_pair(A, B, geom);
    KnnField f(A.extent(), B.extent(), geom, k, &A == &B || A == B);
    const Rect src = f.source_rect();
    const Rect dst = f.target_rect();
    if (std::size_t(k) > dst.area()) throw InvalidArgument("k exceeds the number of distinct targets");
    const SsdMetric metric{&A, &B, geom.size()};
    for (std::size_t i = 0; i < src.area(); ++i) {
        const Point z = src.at(i);
        auto h = f.heap(i);
        std::size_t filled = 0;
        for (std::size_t t = 0; t < dst.area(); ++t) {
            const Point c = dst.at(t);
            if (filled < h.size()) {
                h[filled++] = {c, metric(z, c, kInfinity)};
                if (filled == h.size()) std::make_heap(h.begin(), h.end(), knn_heap::by_dist);
                continue;
            }
            const double d = metric(z, c, h.front().dist);
            knn_heap::offer(h, c, d);
        }
    }
    return f;
}

Nnf best_of(const KnnField& f) {
    Nnf out(f.source_extent(), f.target_extent(), f.geom());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const auto h = f.heap(i);
        out.entries()[i] = *std::min_element(h.begin(), h.end(), knn_heap::by_dist);
    }
    return out;
}

std::vector<std::uint8_t> encode_knn(const KnnField& f) {
    ByteWriter w;
    w.magic("KNNF");
    w.u32(std::uint32_t(f.source_extent().width));
    w.u32(std::uint32_t(f.source_extent().height));
    w.u16(std::uint16_t(f.geom().size()));
    w.u16(std::uint16_t(f.k()));
    const Rect src = f.source_rect();
    for (std::size_t i = 0; i < f.size(); ++i) {
        for (const NnfEntry& e : f.sorted(i)) {
            const Point d = e.target - src.at(i);
            w.i16(std::int16_t(d.x));
            w.i16(std::int16_t(d.y));
            w.f32(float(e.dist));
        }
    }
    return w.take();
}

KnnField decode_knn(std::span<const std::uint8_t> bytes, Extent target, bool self_matching) {
    ByteReader r(bytes);
    r.expect_magic("KNNF");
    const Extent source{int(r.u32()), int(r.u32())};
    const int patch = r.u16();
    const int k = r.u16();
    if (patch < 1 || patch % 2 == 0) throw InputError("KNNF dump: invalid patch size");
    if (k < 1) throw InputError("KNNF dump: invalid k");
    KnnField f(source, target, PatchGeometry(patch), k, self_matching);
    const Rect src = f.source_rect();
    const Rect dst = f.target_rect();
    if (r.remaining() != f.size() * std::size_t(k) * 8) throw InputError("KNNF dump: entry count does not match header");
    for (std::size_t i = 0; i < f.size(); ++i) {
        auto h = f.heap(i);
        for (auto& e : h) {
            const Point d{r.i16(), r.i16()};
            const Point t = src.at(i) + d;
            if (!dst.contains(t)) throw InputError("KNNF dump: target outside the target image");
            e = {t, double(r.f32())};
        }
        std::make_heap(h.begin(), h.end(), knn_heap::by_dist);
    }
    return f;
}

void write_knn(const std::string& path, const KnnField& f) { write_binary_file(path, encode_knn(f)); }

KnnField read_knn(const std::string& path, Extent target, bool self_matching) {
    return decode_knn(read_binary_file(path), target, self_matching);
}

}  // namespace pm
