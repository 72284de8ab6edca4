#pragma once

#include "pm/gpm/knn.hpp"

namespace pm {

/// f' = min(f, f^2): each coordinate also considers the stored neighbors of
/// its stored neighbors and keeps the best k overall. Reads `f` only; the
/// result is a new field. Requires a self-matching field.
KnnField forward_enrichment(const KnnField& f, const ImageBuffer& A, bool early_stop = true);

/// f'' = min(f, f^-1): each coordinate also considers every coordinate that
/// stores it. With a symmetric distance the stored distance is reused;
/// otherwise `A` is used to recompute it. Source and target extents must agree.
KnnField inverse_enrichment(const KnnField& f, const ImageBuffer* A = nullptr);

/// Multi-valued inverse: for each target index (in the target valid rect),
/// the source indices that store it, in ascending source order.
std::vector<std::vector<std::uint32_t>> inverse_lists(const KnnField& f);

enum class EnrichmentSchedule { None, Inverse, Forward, InverseThenForward };

/// Self-matching k-NN with an enrichment pass after every sweep.
KnnField compute_knn_enriched(const ImageBuffer& A, const PatchGeometry& geom, const KnnParams& params,
                              EnrichmentSchedule schedule, KnnRunStats* stats = nullptr);

}  // namespace pm
