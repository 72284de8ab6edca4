#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "pm/annf/annf.hpp"
#include "pm/annf/convergence.hpp"
#include "pm/annf/diagnostics.hpp"
#include "pm/annf/nnf_io.hpp"
#include "pm/core/pyramid.hpp"
#include "support/fixtures.hpp"

using namespace pm;
using namespace pm::testing;

namespace {

bool all_targets_valid(const Nnf& f) {
    for (const auto& e : f.entries())
        if (!f.target_rect().contains(e.target)) return false;
    return true;
}

bool distances_consistent(const Nnf& f, const ImageBuffer& A, const ImageBuffer& B) {
    const Rect src = f.source_rect();
    for (std::size_t i = 0; i < f.size(); ++i) {
        const auto& e = f.entries()[i];
        const double d = patch_distance(A, src.at(i), B, e.target, f.geom());
        if (std::abs(d - e.dist) > 1e-9 * std::max(1.0, d)) return false;
    }
    return true;
}

Nnf identity_field(const ImageBuffer& img, const PatchGeometry& g) {
    Nnf f(img.extent(), img.extent(), g);
    for (std::size_t i = 0; i < f.size(); ++i) f.entries()[i] = {f.source_rect().at(i), 0.0};
    return f;
}

}  // namespace

TEST(InitRandom, DeterministicAndInsideTargetRect) {
    const ImageBuffer A = white_noise(40, 30, 3, 1), B = white_noise(25, 35, 3, 2);
    const Nnf f1 = init_random(A, B, PatchGeometry(), 7);
    const Nnf f2 = init_random(A, B, PatchGeometry(), 7);
    EXPECT_EQ(f1, f2);
    EXPECT_TRUE(all_targets_valid(f1));
    EXPECT_TRUE(distances_consistent(f1, A, B));
    EXPECT_NE(f1, init_random(A, B, PatchGeometry(), 8));
}

TEST(InitRandom, TargetsUniformByChiSquare) {
    // ~1e5 entries over a 64x64 target rect split into an 8x8 grid of cells.
    const ImageBuffer A(322, 322, 1), B(70, 70, 1);
    const Nnf f = init_random(A, B, PatchGeometry(), 12345);
    ASSERT_GE(f.size(), 99000u);
    std::vector<double> counts(64, 0.0);
    const Rect dst = f.target_rect();
    for (const auto& e : f.entries())
        counts[std::size_t((e.target.y - dst.y0) / 8 * 8 + (e.target.x - dst.x0) / 8)] += 1;
    const double expect = double(f.size()) / 64.0;
    double chi2 = 0;
    for (double c : counts) chi2 += (c - expect) * (c - expect) / expect;
    EXPECT_LT(chi2, 92.01);  // chi-square critical value, 63 dof, alpha = 0.01
}

TEST(InitRandom, RejectsImagesSmallerThanPatch) {
    EXPECT_THROW(init_random(ImageBuffer(5, 20, 1), ImageBuffer(20, 20, 1), PatchGeometry(), 0), InvalidArgument);
}

TEST(InitUpsample, ScalesCoarseTargets) {
    Nnf coarse(Extent{30, 30}, Extent{40, 40}, PatchGeometry());
    coarse[{8, 9}] = {{10, 20}, 1.0};
    EXPECT_EQ(upscale_candidate(coarse, {16, 18}, {60, 60}, {80, 80}), (Point{20, 40}));
}

TEST(InitUpsample, MergedDistancesAreAtMostBothCandidateSets) {
    const auto [A, B] = similar_pair(64, 48, 3);
    const ImageBuffer cA = resize_area(A, 32, 24), cB = resize_area(B, 32, 24);
    SearchParams p;
    p.seed = 4;
    const Nnf coarse = compute_nnf(cA, cB, PatchGeometry(), p);
    const Nnf merged = init_upsample(coarse, A, B, p, 1);

    // Recompute both candidate sets independently.
    Nnf random_iterated = init_random(A, B, PatchGeometry(), p.seed);
    iterate(random_iterated, A, B, p, 0);
    const Rect src = merged.source_rect();
    for (std::size_t i = 0; i < merged.size(); ++i) {
        const Point z = src.at(i);
        const Point cand = merged.target_rect().clamp(upscale_candidate(coarse, z, A.extent(), B.extent()));
        const double dc = patch_distance(A, z, B, cand, PatchGeometry());
        EXPECT_LE(merged.entries()[i].dist, std::min(dc, random_iterated.entries()[i].dist) + 1e-12);
    }
    EXPECT_TRUE(distances_consistent(merged, A, B));
}

TEST(InitUpsample, KeepsBetterRandomEntry) {
    const ImageBuffer A = white_noise(40, 40, 1, 5);
    Nnf coarse(Extent{20, 20}, Extent{20, 20}, PatchGeometry());
    // Coarse field sends everything far away; the identity found by the
    // random-iterated field must survive the merge.
    for (auto& e : coarse.entries()) e = {{16, 16}, 0.0};
    SearchParams p;
    Nnf merged = init_upsample(coarse, A, A, p, 1);
    for (int i = 0; i < 3; ++i) iterate(merged, A, A, p, i + 1);
    int identity = 0;
    for (std::size_t i = 0; i < merged.size(); ++i) identity += merged.entries()[i].target == merged.source_rect().at(i);
    EXPECT_GT(identity, 0);
    for (const auto& e : merged.entries()) EXPECT_LE(e.dist, patch_distance(A, {3, 3}, A, {32, 32}, PatchGeometry()) + 100);
}

TEST(InitUpsample, RejectsDimensionMismatch) {
    const ImageBuffer A(40, 40, 1);
    Nnf coarse(Extent{50, 20}, Extent{20, 20}, PatchGeometry());
    EXPECT_THROW(init_upsample(coarse, A, A, SearchParams{}, 1), InvalidArgument);
}

TEST(Propagation, ForwardCandidateFormula) {
    Nnf f(Extent{30, 30}, Extent{40, 40}, PatchGeometry());
    f[{4, 5}] = {{10, 20}, 1.0};
    f[{5, 4}] = {{7, 7}, 1.0};
    const auto c = propagation_candidates(f, {5, 5}, ScanDirection::Forward);
    ASSERT_EQ(c.size(), 2u);
    EXPECT_EQ(c[0], (Point{11, 20}));
    EXPECT_EQ(c[1], (Point{7, 8}));
}

TEST(Propagation, TopLeftCornerHasNoForwardCandidates) {
    Nnf f(Extent{30, 30}, Extent{30, 30}, PatchGeometry());
    EXPECT_TRUE(propagation_candidates(f, {3, 3}, ScanDirection::Forward).empty());
    EXPECT_EQ(propagation_candidates(f, {3, 3}, ScanDirection::Backward).size(), 2u);
}

TEST(Propagation, CandidatesClampToValidRect) {
    Nnf f(Extent{30, 30}, Extent{30, 30}, PatchGeometry());
    f[{4, 5}] = {{26, 10}, 1.0};  // +1 would leave the valid rect (max x = 26)
    const auto c = propagation_candidates(f, {5, 5}, ScanDirection::Forward);
    EXPECT_EQ(c[0], (Point{26, 10}));
}

TEST(RandomSearch, RadiusScheduleCount) {
    const auto r = random_search_radii(1024, 0.5);
    ASSERT_EQ(r.size(), 11u);
    EXPECT_EQ(r.front(), 1024.0);
    EXPECT_EQ(r.back(), 1.0);
    EXPECT_TRUE(random_search_radii(0.5, 0.5).empty());
    for (double w : {1.0, 3.0, 100.0, 640.0, 1023.0}) {
        for (double alpha : {0.5, 0.25, 0.7}) {
            const auto expected = std::size_t(std::floor(std::log(w) / std::log(1.0 / alpha) + 1e-9)) + 1;
            EXPECT_EQ(random_search_radii(w, alpha).size(), expected) << w << " " << alpha;
        }
    }
}

TEST(RandomSearch, CandidateFormula) {
    EXPECT_EQ(detail::random_offset_candidate({100, 100}, 1024 * 0.25, 1.0, -1.0), (Point{356, -156}));
}

TEST(RandomSearch, DegenerateRadiusLeavesEntryUnchanged) {
    const ImageBuffer A = white_noise(30, 30, 3, 1);
    Nnf f = init_random(A, A, PatchGeometry(), 3);
    const Nnf before = f;
    SearchParams p;
    p.w = 0.5;
    CounterRng rng(1);
    random_search(f, A, A, {10, 10}, p, rng);
    EXPECT_EQ(f, before);
}

TEST(RandomSearch, NeverIncreasesDistance) {
    const auto [A, B] = similar_pair(48, 48, 8);
    Nnf f = init_random(A, B, PatchGeometry(), 3);
    CounterRng rng(2);
    for (int t = 0; t < 300; ++t) {
        const Point z{rng.range(3, 45), rng.range(3, 45)};
        const double before = f[z].dist;
        const NnfEntry e = random_search(f, A, B, z, SearchParams{}, rng);
        EXPECT_LE(e.dist, before);
        EXPECT_NEAR(e.dist, patch_distance(A, z, B, e.target, PatchGeometry()), 1e-12);
    }
}

TEST(Iterate, IdentityIsAFixedPoint) {
    const ImageBuffer A = natural_scene(40, 40, 1);
    Nnf f = identity_field(A, PatchGeometry());
    const Nnf before = f;
    for (int s = 0; s < 2; ++s) iterate(f, A, A, SearchParams{}, s);
    EXPECT_EQ(f, before);
}

TEST(Iterate, SweepsAreMonotoneAndConsistent) {
    const auto [A, B] = similar_pair(64, 64, 2);
    SearchParams p;
    p.seed = 9;
    Nnf f = init_random(A, B, PatchGeometry(), p.seed);
    for (int s = 0; s < 6; ++s) {
        const Nnf before = f;
        iterate(f, A, B, p, s);
        for (std::size_t i = 0; i < f.size(); ++i) EXPECT_LE(f.entries()[i].dist, before.entries()[i].dist);
        EXPECT_LE(f.mean_distance(), before.mean_distance());
        EXPECT_TRUE(all_targets_valid(f));
    }
    EXPECT_TRUE(distances_consistent(f, A, B));
}

TEST(Iterate, ConvergesOnSimilarPair) {
    const auto [A, B] = similar_pair(160, 120, 4);
    SearchParams p;
    p.seed = 1;
    Nnf f = init_random(A, B, PatchGeometry(), p.seed);
    Nnf prev;
    for (int s = 0; s < 5; ++s) {
        prev = f;
        iterate(f, A, B, p, s);
    }
    std::size_t same = 0;
    for (std::size_t i = 0; i < f.size(); ++i) same += f.entries()[i] == prev.entries()[i];
    EXPECT_GE(double(same) / double(f.size()), 0.95);
}

TEST(Iterate, StripParallelKeepsInvariantsAndIsDeterministic) {
    const auto [A, B] = similar_pair(96, 80, 5);
    SearchParams p;
    p.threads = 4;
    p.seed = 3;
    Nnf f1 = init_random(A, B, PatchGeometry(), p.seed);
    Nnf f2 = f1;
    for (int s = 0; s < 4; ++s) {
        const Nnf before = f1;
        iterate(f1, A, B, p, s);
        iterate(f2, A, B, p, s);
        for (std::size_t i = 0; i < f1.size(); ++i) EXPECT_LE(f1.entries()[i].dist, before.entries()[i].dist);
    }
    EXPECT_EQ(f1, f2);
    EXPECT_TRUE(all_targets_valid(f1));
    EXPECT_TRUE(distances_consistent(f1, A, B));
}

TEST(ComputeNnf, SelfMatchReachesZero) {
    const ImageBuffer A = natural_scene(64, 64, 3);
    SearchParams p;
    p.iterations = 8;
    const Nnf f = compute_nnf(A, A, PatchGeometry(), p);
    EXPECT_EQ(f.mean_distance(), 0.0);
}

TEST(ComputeNnf, RecoversKnownShift) {
    const ImageBuffer A = natural_scene(120, 90, 6);
    const ImageBuffer B = shifted(A, 5, 0);
    for (bool multiscale : {false, true}) {
        const Nnf f = compute_nnf(A, B, PatchGeometry(), SearchParams{}, multiscale);
        std::size_t total = 0, hit = 0;
        const Rect src = f.source_rect();
        for (std::size_t i = 0; i < f.size(); ++i) {
            const Point z = src.at(i);
            if (!f.target_rect().contains(z + Point{5, 0})) continue;
            ++total;
            hit += f.entries()[i].target - z == Point{5, 0};
        }
        EXPECT_GE(double(hit) / double(total), 0.90) << "multiscale=" << multiscale;
    }
}

TEST(ComputeNnf, SameSeedIsBitIdentical) {
    const auto [A, B] = similar_pair(64, 64, 7);
    SearchParams p;
    p.seed = 77;
    EXPECT_EQ(compute_nnf(A, B, PatchGeometry(), p), compute_nnf(A, B, PatchGeometry(), p));
    EXPECT_EQ(compute_nnf(A, B, PatchGeometry(), p, true), compute_nnf(A, B, PatchGeometry(), p, true));
}

TEST(ComputeNnf, ValidatesParams) {
    const ImageBuffer A(20, 20, 1);
    SearchParams p;
    p.alpha = 1.0;
    EXPECT_THROW(compute_nnf(A, A, PatchGeometry(), p), InvalidArgument);
    p = {};
    p.iterations = 0;
    EXPECT_THROW(compute_nnf(A, A, PatchGeometry(), p), InvalidArgument);
}

TEST(BruteForce, MatchesIndependentDoubleScan) {
    const ImageBuffer A = white_noise(32, 32, 3, 21), B = white_noise(32, 32, 3, 22);
    const Nnf exact = brute_force_nnf(A, B, PatchGeometry());
    // Second, independently written scan: full distances, no early stop.
    const Rect src = PatchGeometry().valid_rect(A), dst = PatchGeometry().valid_rect(B);
    for (int y = src.y0; y < src.y1; ++y)
        for (int x = src.x0; x < src.x1; ++x) {
            double best = kInfinity;
            Point arg;
            for (int ty = dst.y0; ty < dst.y1; ++ty)
                for (int tx = dst.x0; tx < dst.x1; ++tx) {
                    double s = 0;
                    for (int dy = -3; dy <= 3; ++dy)
                        for (int dx = -3; dx <= 3; ++dx)
                            for (int c = 0; c < 3; ++c) {
                                const double d = double(A.at(x + dx, y + dy, c)) - double(B.at(tx + dx, ty + dy, c));
                                s += d * d;
                            }
                    if (s < best) best = s, arg = {tx, ty};
                }
            ASSERT_EQ((exact[Point{x, y}].target), arg);
            ASSERT_EQ((exact[Point{x, y}].dist), best);
        }
}

TEST(BruteForce, LowerBoundsApproximateField) {
    const auto [A, B] = similar_pair(40, 40, 9);
    const Nnf exact = brute_force_nnf(A, B, PatchGeometry());
    const Nnf approx = compute_nnf(A, B, PatchGeometry(), SearchParams{});
    for (std::size_t i = 0; i < exact.size(); ++i) EXPECT_LE(exact.entries()[i].dist, approx.entries()[i].dist);
    const Nnf self = brute_force_nnf(A, A, PatchGeometry(), 2);
    EXPECT_EQ(self.mean_distance(), 0.0);
}

TEST(Convergence, ClosedForm) {
    EXPECT_NEAR(expected_convergence_iters(9.0, 0.04 / 9.0), 24.5033, 1e-3);
    EXPECT_NEAR(expected_convergence_iters(1e9, 1.0), 0.0, 1e-12);
    EXPECT_THROW(expected_convergence_iters(0.0, 1.0), InvalidArgument);
    EXPECT_THROW(expected_convergence_iters(1.0, -1.0), InvalidArgument);
    // The finite form approaches the limit as M grows at fixed gamma.
    EXPECT_NEAR(expected_convergence_iters_finite(9, 9e6, 4e4), expected_convergence_iters(9, 4e4 / 9e6), 1e-3);
}

TEST(Convergence, GeometricMonteCarloAgreesWithFiniteForm) {
    // Oracle: each sweep draws m uniform positions out of M; the region is
    // found once any draw lands in the C-cell neighborhood.
    const int C = 9, M = 90000, m = 400, trials = 10000;
    std::mt19937_64 gen(42);
    std::uniform_int_distribution<int> pos(0, M - 1);
    double total = 0;
    for (int t = 0; t < trials; ++t) {
        int failures = 0;
        for (;;) {
            bool hit = false;
            for (int s = 0; s < m && !hit; ++s) hit = pos(gen) < C;
            if (hit) break;
            ++failures;
        }
        total += failures;
    }
    const double expected = expected_convergence_iters_finite(C, M, m);
    EXPECT_NEAR(total / trials, expected, 0.05 * expected);
}

TEST(CoherenceHistogram, ConstantOffsetIsFullyCoherent) {
    Nnf f(Extent{30, 20}, Extent{40, 40}, PatchGeometry());
    for (std::size_t i = 0; i < f.size(); ++i) f.entries()[i] = {f.source_rect().at(i) + Point{4, 9}, 0};
    const Histogram h = coherence_histogram(f, 8);
    EXPECT_EQ(h.counts[0], h.total());
    EXPECT_GT(h.total(), 0u);
    const ImageBuffer img(20, 20, 1);
    const Histogram hid = coherence_histogram(identity_field(img, PatchGeometry()), 8);
    EXPECT_EQ(hid.counts[0], hid.total());
}

TEST(CoherenceHistogram, NaturalPairHasDecreasingTail) {
    const auto [A, B] = similar_pair(120, 100, 12);
    const Nnf f = compute_nnf(A, B, PatchGeometry(), SearchParams{});
    const Histogram h = coherence_histogram(f, 16);
    EXPECT_GT(h.counts[0], h.total() / 2);
    // Mass past bin 0 decays: early bins outweigh late ones.
    const auto head = h.counts[1] + h.counts[2] + h.counts[3];
    const auto tail = h.counts[8] + h.counts[9] + h.counts[10];
    EXPECT_GT(head, tail);
}

TEST(ImprovementHistogram, ExactFieldGivesEmptyHistogram) {
    const auto [A, B] = similar_pair(30, 30, 2);
    const Nnf exact = brute_force_nnf(A, B, PatchGeometry());
    const auto h = improvement_histogram(A, B, exact, {0.0, 1e9}, {8, 1, 1});
    EXPECT_EQ(h.total(), 0u);
    EXPECT_THROW(improvement_histogram(A, B, exact, {1.0, 1.0}), InvalidArgument);
}

TEST(ImprovementHistogram, NoiseIsFlatNaturalIsPeaked) {
    auto median = [](std::vector<std::uint64_t> v) {
        std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
        return double(v[v.size() / 2]);
    };
    auto center_bin = [](const Histogram2D& h) { return double(h.at(h.side / 2, h.side / 2)); };
    {
        const ImageBuffer A = white_noise(60, 60, 1, 1), B = white_noise(60, 60, 1, 2);
        const Nnf f = init_random(A, B, PatchGeometry(), 5);
        const auto h = improvement_histogram(A, B, f, {0.0, 1e9}, {12, 3, 17});
        ASSERT_GT(h.total(), 0u);
        EXPECT_LT(center_bin(h), 2.0 * median(h.counts));
    }
    {
        const auto [A, B] = similar_pair(90, 90, 3);
        SearchParams p;
        p.iterations = 1;
        const Nnf f = compute_nnf(A, B, PatchGeometry(), p);
        const auto h = improvement_histogram(A, B, f, {0.0, 1.0}, {12, 1, 7});
        ASSERT_GT(h.total(), 0u);
        double center = 0;
        for (int gy = h.side / 2 - 2; gy <= h.side / 2 + 2; ++gy)
            for (int gx = h.side / 2 - 2; gx <= h.side / 2 + 2; ++gx) center += double(h.at(gx, gy));
        EXPECT_GT(center, double(h.total()) * 25.0 / double(h.side * h.side));
    }
}

TEST(NnfDump, RoundTripsAndRejectsMalformedData) {
    const auto [A, B] = similar_pair(40, 30, 1);
    const Nnf f = compute_nnf(A, B, PatchGeometry(), SearchParams{});
    const auto bytes = encode_nnf(f);
    ASSERT_EQ(bytes.size(), 14 + f.size() * 8);
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "NNF1");
    EXPECT_EQ(bytes[4], 40);  // little-endian width
    const Nnf back = decode_nnf(bytes, B.extent());
    for (std::size_t i = 0; i < f.size(); ++i) {
        EXPECT_EQ(back.entries()[i].target, f.entries()[i].target);
        EXPECT_EQ(back.entries()[i].dist, double(float(f.entries()[i].dist)));
    }
    auto truncated = bytes;
    truncated.resize(bytes.size() - 3);
    EXPECT_THROW(decode_nnf(truncated, B.extent()), InputError);
    auto bad = bytes;
    bad[0] = 'X';
    EXPECT_THROW(decode_nnf(bad, B.extent()), InputError);
}
