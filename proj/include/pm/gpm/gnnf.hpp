#pragma once

#include <vector>

#include "pm/annf/nnf.hpp"
#include "pm/core/image.hpp"

namespace pm {

/// Closed box of admissible rotations (radians) and scale ratios.
struct TransformRange {
    double theta_min = 0.0;
    double theta_max = 0.0;
    double scale_min = 1.0;
    double scale_max = 1.0;

    void validate() const;
    bool degenerate() const { return theta_min == theta_max && scale_min == scale_max; }

    friend bool operator==(const TransformRange&, const TransformRange&) = default;
};

enum class SampleFilter { Bilinear, Nearest };

struct GnnfEntry {
    Point target;
    float theta = 0.0f;
    float scale = 1.0f;
    double dist = kInfinity;

    friend bool operator==(const GnnfEntry&, const GnnfEntry&) = default;
};

/// Nearest-neighbor field over (x, y, theta, scale). Source patches are axis
/// aligned; the matched patch in B is the p x p grid mapped through
/// target + scale * R(theta) * (dx, dy).
class GeneralizedNnf {
public:
    GeneralizedNnf() = default;
    GeneralizedNnf(Extent source, Extent target, PatchGeometry geom, TransformRange range);

    Extent source_extent() const { return source_; }
    Extent target_extent() const { return target_; }
    const PatchGeometry& geom() const { return geom_; }
    const TransformRange& range() const { return range_; }
    Rect source_rect() const { return geom_.valid_rect(source_); }

    GnnfEntry& operator[](Point p) { return entries_[source_rect().index(p)]; }
    const GnnfEntry& operator[](Point p) const { return entries_[source_rect().index(p)]; }
    std::vector<GnnfEntry>& entries() { return entries_; }
    const std::vector<GnnfEntry>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    double mean_distance() const;

    friend bool operator==(const GeneralizedNnf&, const GeneralizedNnf&) = default;

private:
    Extent source_;
    Extent target_;
    PatchGeometry geom_;
    TransformRange range_;
    std::vector<GnnfEntry> entries_;
};

struct GnnfParams {
    SearchParams search;
    TransformRange range;
    SampleFilter filter = SampleFilter::Bilinear;
    /// Compare patches after per-patch mean/std normalization.
    bool standardize = false;
};

struct GnnfRunStats {
    std::vector<double> mean_distance_per_sweep;
    std::vector<double> seconds_per_sweep;
};

/// Centers in an image of extent `e` whose transformed footprint stays inside it.
Rect transformed_valid_rect(Extent e, const PatchGeometry& geom, double theta, double scale);

/// p x p x channels samples of B under the similarity transform about `center`.
std::vector<float> sample_transformed_patch(const ImageBuffer& B, Point center, double theta, double scale,
                                            const PatchGeometry& geom, SampleFilter filter = SampleFilter::Bilinear);

/// SSD between A's axis-aligned patch at `a` and B's transformed patch.
double transformed_patch_distance(const ImageBuffer& A, Point a, const ImageBuffer& B, const GnnfEntry& t,
                                  const PatchGeometry& geom, SampleFilter filter = SampleFilter::Bilinear,
                                  double bound = kInfinity);

/// Candidate from a neighbor's entry: its target advanced by
/// scale * R(theta) * delta (rounded), theta and scale copied.
GnnfEntry jacobian_propagate(const GnnfEntry& neighbor, Point delta);

GeneralizedNnf init_random_gnnf(const ImageBuffer& A, const ImageBuffer& B, const PatchGeometry& geom,
                                const GnnfParams& params);

SweepStats iterate_gnnf(GeneralizedNnf& f, const ImageBuffer& A, const ImageBuffer& B, const GnnfParams& params,
                        int sweep);

GeneralizedNnf compute_gnnf(const ImageBuffer& A, const ImageBuffer& B, const PatchGeometry& geom,
                            const GnnfParams& params, GnnfRunStats* stats = nullptr);

}  // namespace pm
