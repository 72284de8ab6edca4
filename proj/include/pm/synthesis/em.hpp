#pragma once

#include <functional>
#include <vector>

#include "pm/annf/nnf.hpp"
#include "pm/core/image.hpp"
#include "pm/synthesis/bds.hpp"
#include "pm/synthesis/constraints.hpp"
#include "pm/synthesis/model.hpp"

namespace pm {

struct EmSchedule {
    int patch = PatchGeometry::kDefaultSize;
    double pyramid_factor = 0.5;
    int min_dim = 32;
    /// EM iterations at the coarsest level; each finer level halves the
    /// count, never going below `fine_iterations`.
    int coarse_iterations = 20;
    int fine_iterations = 4;
    /// PatchMatch sweeps per field in each E-step.
    int search_iterations = 2;
    /// Per-step size factor of gradual rescaling (retargeting, local scaling).
    double gradual_step = 0.9;
    /// EM iterations after each gradual rescaling step.
    int step_iterations = 2;
    /// The finest this many levels search with radius 1 (never the coarsest).
    int radius_one_levels = 1;
    ColorSpace space = ColorSpace::Lab;
    RansacParams ransac;
    std::uint64_t seed = 0;
    int threads = 1;

    void validate() const;
    /// EM iterations run at `level` of `levels` (0 = coarsest).
    int iterations_at(int level, int levels) const;
};

struct EmIterationInfo {
    int level = 0;
    int levels = 1;
    int iteration = 0;  // within the level (or within a gradual step)
    bool gradual = false;
    /// Completed fraction of all scheduled EM iterations.
    double progress = 0.0;
    /// Approximate score of the output before this iteration's M-step.
    BdsScore score;
    const ImageBuffer* source = nullptr;
    const ImageBuffer* output = nullptr;  // after the M-step
    const Nnf* target_to_source = nullptr;
    const Nnf* source_to_target = nullptr;  // null when completeness is off
    const std::vector<int>* labels_source = nullptr;
    const std::vector<int>* labels_target = nullptr;
};

using EmObserver = std::function<void(const EmIterationInfo&)>;

/// Coarse-to-fine BDS minimization of T starting from T0. Source labels,
/// target labels, and hard regions are applied at every level; model
/// constraints are projected after every E-step.
ImageBuffer em_optimize(const ImageBuffer& S, const ImageBuffer& T0, const EmSchedule& schedule,
                        const ConstraintSet& constraints = {}, const EmObserver& observer = {});

}  // namespace pm
