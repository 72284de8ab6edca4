#pragma once

#include <functional>
#include <span>
#include <vector>

#include "pm/annf/nnf.hpp"
#include "pm/core/image.hpp"

namespace pm {

/// One fixed-length vector per valid patch center of an image.
class DescriptorField {
public:
    DescriptorField() = default;
    DescriptorField(Extent extent, PatchGeometry geom, int dim)
        : extent_(extent), geom_(geom), dim_(dim), data_(geom.valid_rect(extent).area() * std::size_t(dim)) {}

    Extent extent() const { return extent_; }
    const PatchGeometry& geom() const { return geom_; }
    Rect valid_rect() const { return geom_.valid_rect(extent_); }
    int dim() const { return dim_; }

    std::span<float> at(Point p) { return {data_.data() + valid_rect().index(p) * std::size_t(dim_), std::size_t(dim_)}; }
    std::span<const float> at(Point p) const {
        return {data_.data() + valid_rect().index(p) * std::size_t(dim_), std::size_t(dim_)};
    }

private:
    Extent extent_;
    PatchGeometry geom_;
    int dim_ = 0;
    std::vector<float> data_;
};

/// Any function inducing a total order; symmetry and the triangle inequality
/// are not assumed. May return any value >= bound once it exceeds bound.
using DescriptorDistance = std::function<double(std::span<const float>, std::span<const float>, double bound)>;

/// Raw patch samples, row-major with channels interleaved.
DescriptorField raw_patch_descriptors(const ImageBuffer& img, const PatchGeometry& geom);
/// Raw patch samples with the per-channel patch mean removed.
DescriptorField normalized_patch_descriptors(const ImageBuffer& img, const PatchGeometry& geom);

/// Illumination correction: subtracts the mean of `v` and divides by its
/// standard deviation, floored at `min_std`. Any a * v + b with a > 0 maps to
/// the same result.
void standardize(std::span<float> v, double min_std = 1e-4);
/// Raw patch samples standardized per patch.
DescriptorField standardized_patch_descriptors(const ImageBuffer& img, const PatchGeometry& geom);

double descriptor_ssd(std::span<const float> a, std::span<const float> b, double bound);

/// Translation matching with `distance` in place of patch SSD.
Nnf match_descriptors(const DescriptorField& A, const DescriptorField& B, const DescriptorDistance& distance,
                      const SearchParams& params, const MatchConstraints* constraints = nullptr);

}  // namespace pm
