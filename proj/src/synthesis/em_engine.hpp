#pragma once

// Internal coarse-to-fine EM driver shared by the synthesis tools.

#include <memory>
#include <vector>

#include "pm/synthesis/em.hpp"

namespace pm::detail {

struct EmProblem {
    const ImageBuffer* source = nullptr;
    Extent target;
    const ConstraintSet* constraints = nullptr;
    /// Full-resolution output pixels EM may change; empty means all. Other
    /// pixels (and hard regions) take their value from `fixed_values`.
    std::vector<std::uint8_t> free_mask;
    const ImageBuffer* fixed_values = nullptr;
    /// Source and output are one image (completion): source centers whose
    /// patch touches a free pixel are not matchable and fully fixed output
    /// centers are pinned to themselves.
    bool same_image = false;
    bool use_complete = true;
};

class EmEngine {
public:
    EmEngine(const EmProblem& problem, const EmSchedule& schedule, const EmObserver& observer);
    ~EmEngine();

    int levels() const;
    Extent source_extent(int level) const;
    Extent target_extent(int level) const;
    /// Announces EM iterations run outside the level schedule (progress only).
    void plan_extra_iterations(int n);

    /// Starts at the coarsest level with output `T` of any extent.
    void begin(const ImageBuffer& T);
    /// Gradual step at the coarsest level: resamples the output to `e` and
    /// runs `iterations` EM iterations.
    void resize_to(Extent e, int iterations);
    /// Gradual step at the coarsest level with a caller-edited output. The
    /// problem's constraint set is re-read, so callers may change it first.
    void replace_output(const ImageBuffer& T, int iterations);
    const ImageBuffer& output() const;
    /// Runs the coarsest level's iterations (the output must have reached
    /// target_extent(0)) and then every finer level.
    ImageBuffer finish();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Level extents shared by two images, coarsest first; both lists have the
/// same length.
std::pair<std::vector<Extent>, std::vector<Extent>> shared_pyramid(Extent a, Extent b, double factor, int min_dim,
                                                                   int patch);

}  // namespace pm::detail
