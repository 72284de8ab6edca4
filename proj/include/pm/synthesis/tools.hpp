#pragma once

#include <vector>

#include "pm/synthesis/em.hpp"

namespace pm {

/// Resizes S to `target` by gradual rescaling at the coarsest level, then
/// coarse-to-fine EM. Models refer to source coordinates.
ImageBuffer retarget(const ImageBuffer& S, Extent target, const ConstraintSet& constraints = {},
                     const EmSchedule& schedule = {}, const EmObserver& observer = {});

/// Fills the nonzero pixels of `hole` (one byte per pixel) using only the
/// coherence term. `labels` (empty or one int per pixel) restricts labeled
/// hole coordinates to exterior coordinates with the same label. Throws
/// InvalidArgument when the hole touches the border or leaves no exterior
/// patch, and ConstraintError naming the label when a label inside the hole
/// has no exterior support.
ImageBuffer complete(const ImageBuffer& S, const std::vector<std::uint8_t>& hole, const std::vector<int>& labels = {},
                     const EmSchedule& schedule = {}, const EmObserver& observer = {});

enum class ReshuffleInit { Swap, Interpolate, Clone };

/// Moves `region` by `offset`. The moved pixels are pinned to the source
/// region; the rest of the image is initialized per `init` and re-synthesized.
ImageBuffer reshuffle(const ImageBuffer& S, const Rect& region, Point offset, ReshuffleInit init,
                      const ConstraintSet& constraints = {}, const EmSchedule& schedule = {},
                      const EmObserver& observer = {});

/// Grows or shrinks `region` about its center by `factor` in small steps,
/// re-synthesizing the region (from the source region's patches) and its
/// surroundings after every step, so texture keeps its scale.
ImageBuffer local_scale(const ImageBuffer& S, const Rect& region, double factor, const EmSchedule& schedule = {},
                        const EmObserver& observer = {});

/// Input checks run by the tools above before any synthesis, exposed so
/// callers can reject a request up front. They throw what the tool would.
/// validate_completion returns false when the hole is empty.
void validate_retarget(Extent source, Extent target, int patch);
bool validate_completion(Extent source, const std::vector<std::uint8_t>& hole, const std::vector<int>& labels,
                         int patch);
void validate_reshuffle(Extent source, const Rect& region, Point offset);
void validate_local_scale(Extent source, const Rect& region, double factor);

/// Inverse-distance-weighted fill of the masked pixels from the unmasked
/// pixels bordering the mask (weights 1 / d^2).
ImageBuffer fill_from_boundary(const ImageBuffer& img, const std::vector<std::uint8_t>& mask);

}  // namespace pm
