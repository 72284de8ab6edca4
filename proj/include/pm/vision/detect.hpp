#pragma once

#include <array>
#include <optional>
#include <span>

#include "pm/gpm/gnnf.hpp"

namespace pm {

/// p -> scale * R(theta) * p + (tx, ty), mapping template to scene coordinates.
struct Similarity {
    double theta = 0.0;
    double scale = 1.0;
    double tx = 0.0;
    double ty = 0.0;

    std::array<double, 2> apply(double x, double y) const;
};

struct Detection {
    Similarity transform;
    /// Fraction of template patches consistent with the transform.
    double confidence = 0.0;
};

struct DetectParams {
    SearchParams search{.iterations = 8};
    int ransac_iterations = 1000;
    /// Inlier distance in scene px between a match and the mapped template point.
    double inlier_threshold = 3.0;
    double min_confidence = 0.2;

    void validate() const;
};

/// Least-squares similarity (Umeyama) from point pairs; needs two distinct points.
std::optional<Similarity> fit_similarity(std::span<const std::array<double, 2>> from,
                                         std::span<const std::array<double, 2>> to);

/// Template detection: a rotation/scale field from template to scene with
/// illumination-corrected patches, followed by RANSAC for one similarity.
/// Empty when the inlier fraction is below `min_confidence`.
std::optional<Detection> detect_object(const ImageBuffer& templ, const ImageBuffer& scene, const PatchGeometry& geom,
                                       const TransformRange& range, const DetectParams& params = {});

}  // namespace pm
