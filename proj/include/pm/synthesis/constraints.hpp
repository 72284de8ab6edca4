#pragma once

#include <string>
#include <vector>

#include "pm/core/image.hpp"

namespace pm {

enum class ModelKind { FreeLine, FixedSlopeLine, FixedPositionLine, TranslateRegion, ScaleRegion };

/// A geometric model that a set of source pixels must satisfy in the output.
/// Lines use the segment (x0, y0)-(x1, y1) in source coordinates; regions use
/// the rectangle [x0, x1) x [y0, y1). A fixed-position line also carries the
/// output line (tx0, ty0)-(tx1, ty1) in output coordinates.
struct ModelConstraint {
    ModelKind kind = ModelKind::FreeLine;
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    double tx0 = 0, ty0 = 0, tx1 = 0, ty1 = 0;
    double scale = 1.0;

    bool is_line() const {
        return kind == ModelKind::FreeLine || kind == ModelKind::FixedSlopeLine ||
               kind == ModelKind::FixedPositionLine;
    }
    friend bool operator==(const ModelConstraint&, const ModelConstraint&) = default;
};

/// Source rectangle whose content is pinned at `offset` in the output.
struct HardRegion {
    Rect source;
    Point offset;
    friend bool operator==(const HardRegion&, const HardRegion&) = default;
};

struct ConstraintSet {
    /// Per-pixel labels of the source and the output (0 = unconstrained);
    /// empty when unused. A labeled output coordinate may only match source
    /// coordinates of the same label.
    std::vector<int> labels_source;
    std::vector<int> labels_target;
    std::vector<ModelConstraint> models;
    std::vector<HardRegion> hard;
    /// Vote weight of source pixels covered by a model.
    double model_weight = 1.2;

    bool empty() const { return labels_source.empty() && labels_target.empty() && models.empty() && hard.empty(); }
};

/// Text annotation format, one record per line ('#' starts a comment):
///   line free x0 y0 x1 y1
///   line slope x0 y0 x1 y1
///   line pos x0 y0 x1 y1 tx0 ty0 tx1 ty1
///   region translate x0 y0 x1 y1
///   region scale x0 y0 x1 y1 s
///   region move x0 y0 x1 y1 dx dy
/// "region move" is a hard region; the others are models.
struct Annotations {
    std::vector<ModelConstraint> models;
    std::vector<HardRegion> hard;
    friend bool operator==(const Annotations&, const Annotations&) = default;
};

/// Throws InputError naming the offending line.
Annotations parse_annotations(const std::string& text);
std::string format_annotations(const Annotations& a);

/// Checks geometry against the source and output extents. Throws
/// InvalidArgument for degenerate lines, empty or out-of-bounds regions, and
/// non-positive scales.
void validate_annotations(const Annotations& a, Extent source, Extent target);

}  // namespace pm
