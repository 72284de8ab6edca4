#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "pm/core/distance.hpp"
#include "pm/core/geometry.hpp"

namespace pm {

struct NnfEntry {
    Point target;
    double dist = kInfinity;

    friend bool operator==(const NnfEntry&, const NnfEntry&) = default;
};

/// Translation nearest-neighbor field from the valid patch centers of a
/// source image A to the valid patch centers of a target image B.
class Nnf {
public:
    Nnf() = default;
    Nnf(Extent source, Extent target, PatchGeometry geom, std::uint64_t seed = 0)
        : source_(source), target_(target), geom_(geom), seed_(seed),
          entries_(geom.valid_rect(source).area()) {}

    Extent source_extent() const { return source_; }
    Extent target_extent() const { return target_; }
    const PatchGeometry& geom() const { return geom_; }
    std::uint64_t seed() const { return seed_; }
    Rect source_rect() const { return geom_.valid_rect(source_); }
    Rect target_rect() const { return geom_.valid_rect(target_); }

    NnfEntry& operator[](Point p) { return entries_[source_rect().index(p)]; }
    const NnfEntry& operator[](Point p) const { return entries_[source_rect().index(p)]; }
    std::span<NnfEntry> entries() { return entries_; }
    std::span<const NnfEntry> entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }

    double mean_distance() const {
        if (entries_.empty()) return 0.0;
        double s = 0.0;
        for (const NnfEntry& e : entries_) s += e.dist;
        return s / double(entries_.size());
    }
    std::size_t memory_bytes() const { return entries_.size() * sizeof(NnfEntry); }

    friend bool operator==(const Nnf&, const Nnf&) = default;

private:
    Extent source_;
    Extent target_;
    PatchGeometry geom_;
    std::uint64_t seed_ = 0;
    std::vector<NnfEntry> entries_;
};

struct SearchParams {
    int iterations = 5;
    double alpha = 0.5;
    /// Maximum random-search radius in pixels; 0 selects the larger
    /// dimension of the target image.
    double w = 0.0;
    bool early_stop = true;
    int threads = 1;
    std::uint64_t seed = 0;

    void validate() const;
    double radius_for(Extent target) const {
        return w > 0.0 ? w : double(std::max(target.width, target.height));
    }
};

/// Optional restrictions on a field: an admissibility predicate on
/// (source, target) pairs and source coordinates whose entries are frozen.
struct MatchConstraints {
    std::function<bool(Point source, Point target)> allow;
    /// Indexed like the field's entries; nonzero means pinned.
    std::vector<std::uint8_t> pinned;

    bool allows(Point s, Point t) const { return !allow || allow(s, t); }
    bool is_pinned(std::size_t index) const { return !pinned.empty() && pinned[index] != 0; }
};

/// Per-sweep bookkeeping reported by the engines.
struct SweepStats {
    std::size_t updates = 0;
    std::size_t evaluations = 0;
    std::size_t aux_bytes = 0;
};

}  // namespace pm
