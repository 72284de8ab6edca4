#pragma once

#include <span>
#include <vector>

#include "pm/core/rng.hpp"
#include "pm/synthesis/constraints.hpp"

namespace pm {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
    friend bool operator==(const Vec2&, const Vec2&) = default;
};

/// A source point and its current output position NN(source). Line models
/// only use the output positions.
struct Correspondence {
    Vec2 source;
    Vec2 target;
};

struct RansacParams {
    int iterations = 500;
    double inlier_threshold = 2.0;  // px
    double min_inlier_fraction = 0.5;
};

struct ModelFit {
    bool ok = false;
    /// Line a*x + b*y + c = 0 with a^2 + b^2 = 1.
    double a = 0.0, b = 0.0, c = 0.0;
    /// Region map p -> scale * p + (tx, ty).
    double scale = 1.0, tx = 0.0, ty = 0.0;
    /// Projected output positions, parallel to the input (unchanged on failure).
    std::vector<Vec2> projected;
    /// Points within the inlier threshold of the final model.
    std::vector<char> inlier;
    std::size_t inlier_count = 0;
    double max_inlier_residual = 0.0;
};

/// Robust fit of `model` to the correspondences followed by projection of
/// every output position onto the fitted model. Line models refit on inliers
/// only; region models refit on all points. Fixed-position lines are not
/// fitted. `ok` is false when there are too few points or inliers, in which
/// case the positions are returned unchanged.
ModelFit fit_and_project_model(std::span<const Correspondence> points, const ModelConstraint& model,
                               const RansacParams& params, CounterRng& rng);

/// Perpendicular distance from `p` to the line of `fit`.
double line_residual(const ModelFit& fit, Vec2 p);

}  // namespace pm
