#pragma once

#include <vector>

#include "pm/annf/nnf.hpp"
#include "pm/core/image.hpp"

namespace pm {

/// Bidirectional similarity of a source S and an output T: `complete` is the
/// mean over S-patches of the distance to their nearest T-patch, `cohere` the
/// mean over T-patches of the distance to their nearest S-patch.
struct BdsScore {
    double complete = 0.0;
    double cohere = 0.0;
    double total() const { return complete + cohere; }
};

struct BdsOptions {
    /// Exhaustive nearest neighbors when true, PatchMatch fields otherwise.
    bool exact = false;
    SearchParams search;
    /// Distances are measured in this space (images are converted first).
    ColorSpace space = ColorSpace::Lab;
    /// Optional per-pixel weights of S and T patch centers (weighted means).
    const std::vector<float>* source_weights = nullptr;
    const std::vector<float>* target_weights = nullptr;
};

BdsScore bds_distance(const ImageBuffer& S, const ImageBuffer& T, const PatchGeometry& geom,
                      const BdsOptions& opts = {});

/// One M-step. Every output pixel becomes the weighted mean of the source
/// colors voted onto it: each T-patch t with NN(t) = s votes S(s + d) onto
/// t + d, and each S-patch s with NN(s) = t votes S(s + d) onto t + d.
/// Votes of the first kind weigh w(s + d) / N_T and of the second kind
/// w(s + d) / N_S, where w are the optional per-pixel source weights and N
/// the field sizes. Pixels without votes keep their `current` color. Either
/// field may be null.
ImageBuffer vote_and_average(const ImageBuffer& current, const Nnf* source_to_target, const Nnf* target_to_source,
                             const ImageBuffer& S, const std::vector<float>* source_weights = nullptr);

}  // namespace pm
