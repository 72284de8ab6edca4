#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "pm/core/geometry.hpp"
#include "pm/core/rng.hpp"

namespace pm {

struct BinOptions {
    int dims = 4;           // PCA dimensions kept
    int parts = 9;          // partitions per dimension
    int sample_stride = 8;  // PCA is fitted on every sample_stride-th patch
    int index_every = 1;    // bucket every index_every-th coordinate
};

/// Buckets of patch centers keyed by the quantile cell of their projection
/// onto the leading principal components of patch space.
class BinIndex {
public:
    BinIndex() = default;

    const BinOptions& options() const { return opts_; }
    const PatchGeometry& geom() const { return geom_; }
    std::size_t bin_count() const;
    std::size_t indexed_count() const { return indexed_; }
    bool degenerate() const { return degenerate_; }
    bool empty() const { return indexed_ == 0; }

    const std::unordered_map<std::uint32_t, std::vector<Point>>& buckets() const { return buckets_; }
    /// Bucket id of a raw patch (row-major samples, channels interleaved).
    std::uint32_t bin_of(std::span<const float> patch) const;
    /// Bucket id of the patch centered at `z` in `img`.
    std::uint32_t bin_of(const ImageBuffer& img, Point z) const;
    const std::vector<Point>* bucket(std::uint32_t id) const;
    /// `id` if nonempty, else the nonempty bucket nearest in cell
    /// coordinates (L1, ties to the smaller id).
    std::uint32_t nearest_nonempty(std::uint32_t id) const;

    friend BinIndex build_bin_index(const ImageBuffer& B, const PatchGeometry& geom, const BinOptions& opts);

private:
    /// Projection of a patch onto leading component `d`, relative to the mean.
    double project(std::size_t d, std::span<const float> patch) const;
    void build_nearest_table();

    BinOptions opts_;
    PatchGeometry geom_;
    int channels_ = 0;
    bool degenerate_ = false;
    std::size_t indexed_ = 0;
    std::vector<float> mean_;                   // patch-space mean
    std::vector<std::vector<float>> basis_;     // dims rows over patch space
    std::vector<double> offset_;                // basis_ times mean_, per dim
    std::vector<std::vector<double>> cutoffs_;  // parts - 1 boundaries per dim
    std::unordered_map<std::uint32_t, std::vector<Point>> buckets_;
    std::vector<std::uint32_t> nonempty_;       // ascending bucket ids
    std::vector<std::uint32_t> nearest_;        // per cell: nearest nonempty bucket
};

BinIndex build_bin_index(const ImageBuffer& B, const PatchGeometry& geom, const BinOptions& opts = {});

/// Uniform random member of the query's bucket, or of the nonempty bucket
/// nearest in cell coordinates (L1, ties to the smaller id).
Point bin_candidate(const BinIndex& index, std::span<const float> query_patch, CounterRng& rng);
Point bin_candidate(const BinIndex& index, const ImageBuffer& A, Point z, CounterRng& rng);

}  // namespace pm
