#pragma once

#include <vector>

#include "pm/annf/engine.hpp"
#include "pm/annf/nnf.hpp"
#include "pm/core/image.hpp"

namespace pm {

/// Uniform random field over B's valid rectangle.
Nnf init_random(const ImageBuffer& A, const ImageBuffer& B, const PatchGeometry& geom, std::uint64_t seed,
                const MatchConstraints* constraints = nullptr);

/// Fine-level initialization from a coarser field: random init, `merge_iterations`
/// sweeps, then every entry takes the upscaled coarse candidate where that
/// candidate is strictly closer.
Nnf init_upsample(const Nnf& coarse, const ImageBuffer& fineA, const ImageBuffer& fineB,
                  const SearchParams& params, int merge_iterations = 1,
                  const MatchConstraints* constraints = nullptr);

/// Fine-level candidate for `z` from a coarse field (offset preserving).
Point upscale_candidate(const Nnf& coarse, Point z, Extent fine_source, Extent fine_target);

/// Propagation candidates f(z - d) + d for d in {(1,0),(0,1)} (forward) or
/// {(-1,0),(0,-1)} (backward), clamped to the target rectangle.
std::vector<Point> propagation_candidates(const Nnf& f, Point z, ScanDirection direction);

/// Radii w * alpha^i tested by one random search, in order.
std::vector<double> random_search_radii(double w, double alpha);

/// Runs the random search for one coordinate and stores the improved entry.
NnfEntry random_search(Nnf& f, const ImageBuffer& A, const ImageBuffer& B, Point z,
                       const SearchParams& params, CounterRng& rng);

/// One sweep (propagation then random search per coordinate). `sweep`
/// selects the scan order: even = raster, odd = reverse raster.
SweepStats iterate(Nnf& f, const ImageBuffer& A, const ImageBuffer& B, const SearchParams& params, int sweep,
                   const MatchConstraints* constraints = nullptr);

struct NnfRunStats {
    std::size_t peak_aux_bytes = 0;
    std::vector<double> mean_distance_per_sweep;
};

/// Initialization (random, or coarse-to-fine when `multiscale`) followed by
/// params.iterations sweeps at full resolution.
Nnf compute_nnf(const ImageBuffer& A, const ImageBuffer& B, const PatchGeometry& geom,
                const SearchParams& params, bool multiscale = false, NnfRunStats* stats = nullptr);

/// Exact field by exhaustive scan; O(|A| |B| p^2).
Nnf brute_force_nnf(const ImageBuffer& A, const ImageBuffer& B, const PatchGeometry& geom, int threads = 1);

}  // namespace pm
