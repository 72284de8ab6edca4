#pragma once

#include <array>
#include <optional>
#include <vector>

#include "pm/annf/nnf.hpp"
#include "pm/core/image.hpp"

namespace pm {

struct LatticeParams {
    int k = 16;
    int ransac_iterations = 500;
    /// Largest distance in px from an offset to its lattice point.
    double inlier_threshold = 1.5;
    /// Share of pooled neighbor offsets that must fit the lattice.
    double min_inlier_fraction = 0.5;
    /// Largest |a|, |b| in offset = a * v1 + b * v2.
    int max_coefficient = 8;
    SearchParams search;

    void validate() const;
};

struct LatticeResult {
    /// Reduced basis: |v1| <= |v2| and |v1 . v2| <= |v1|^2 / 2.
    std::array<double, 2> v1{}, v2{};
    /// One byte per pixel; nonzero where most neighbor offsets fit.
    std::vector<std::uint8_t> inlier_mask;
    double inlier_fraction = 0.0;
};

/// Lattice symmetry of a repeated pattern from the pooled k-NN offsets of
/// mean/std normalized patches. Empty when too few offsets fit any lattice.
std::optional<LatticeResult> detect_lattice(const ImageBuffer& img, const PatchGeometry& geom,
                                            const LatticeParams& params = {});

/// Lagrange-Gauss reduction of a planar basis, with v1 oriented to have a
/// positive x (or positive y when x is within 0.1% of |v1| of zero) and v2
/// chosen with v1 x v2 > 0.
std::pair<std::array<double, 2>, std::array<double, 2>> reduce_basis(std::array<double, 2> v1,
                                                                     std::array<double, 2> v2);

}  // namespace pm
