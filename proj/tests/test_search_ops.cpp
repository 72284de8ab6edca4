#include <gtest/gtest.h>

#include <set>

#include "pm/search_ops/bin_index.hpp"
#include "pm/search_ops/enrichment.hpp"
#include "support/fixtures.hpp"

using namespace pm;
using namespace pm::testing;

namespace {

KnnField random_self_field(const ImageBuffer& A, int k, std::uint64_t seed, int sweeps) {
    KnnParams kp;
    kp.k = k;
    kp.search.seed = seed;
    KnnField f = init_random_knn(A, A, PatchGeometry(), kp);
    for (int s = 0; s < sweeps; ++s) iterate_knn(f, A, A, kp, s);
    return f;
}

void expect_rankwise_not_worse(const KnnField& out, const KnnField& in) {
    for (std::size_t i = 0; i < in.size(); ++i) {
        const auto a = out.sorted(i), b = in.sorted(i);
        for (std::size_t j = 0; j < a.size(); ++j) ASSERT_LE(a[j].dist, b[j].dist);
    }
}

void expect_valid_heaps(const KnnField& f, const ImageBuffer& A) {
    for (std::size_t i = 0; i < f.size(); ++i) {
        const auto h = f.heap(i);
        ASSERT_TRUE(std::is_heap(h.begin(), h.end(), knn_heap::by_dist));
        std::set<std::pair<int, int>> seen;
        for (const auto& e : h) {
            ASSERT_TRUE(seen.insert({e.target.x, e.target.y}).second);
            ASSERT_NEAR(e.dist, patch_distance(A, f.source_rect().at(i), A, e.target, f.geom()), 1e-9);
        }
    }
}

KnnField identity_field(const ImageBuffer& A) {
    KnnField f(A.extent(), A.extent(), PatchGeometry(), 1, true);
    for (std::size_t i = 0; i < f.size(); ++i) f.heap(i)[0] = {f.source_rect().at(i), 0.0};
    return f;
}

}  // namespace

TEST(ForwardEnrichment, IdentityFieldIsAFixedPoint) {
    const ImageBuffer A = white_noise(20, 20, 3, 1);
    const KnnField f = identity_field(A);
    EXPECT_EQ(forward_enrichment(f, A), f);
}

TEST(ForwardEnrichment, FollowsTwoStepChain) {
    ImageBuffer A = white_noise(40, 40, 1, 2);
    const PatchGeometry g;
    const Point a{6, 6}, b{20, 10}, c{30, 30};
    // Make c a near copy of a so D(a, c) is far below D(a, b).
    for (int dy = -3; dy <= 3; ++dy)
        for (int dx = -3; dx <= 3; ++dx) A.at(c.x + dx, c.y + dy, 0) = A.at(a.x + dx, a.y + dy, 0) + 0.01f;
    KnnField f(A.extent(), A.extent(), g, 1, true);
    for (std::size_t i = 0; i < f.size(); ++i) {
        const Point z = f.source_rect().at(i);
        const Point t = z == a ? b : z == b ? c : z;
        f.heap(i)[0] = {t, patch_distance(A, z, A, t, g)};
    }
    const double dab = f.heap(a)[0].dist, dac = patch_distance(A, a, A, c, g);
    ASSERT_LT(dac, dab);
    const KnnField out = forward_enrichment(f, A);
    EXPECT_EQ(out.heap(a)[0].target, c);
    EXPECT_DOUBLE_EQ(out.heap(a)[0].dist, dac);
}

TEST(ForwardEnrichment, NeverWorsensAndKeepsHeapInvariants) {
    const ImageBuffer A = natural_scene(36, 36, 3);
    const KnnField f = random_self_field(A, 5, 7, 1);
    const KnnField out = forward_enrichment(f, A);
    expect_rankwise_not_worse(out, f);
    expect_valid_heaps(out, A);
    EXPECT_LT(out.mean_distance(), f.mean_distance());
}

TEST(ForwardEnrichment, RequiresSelfMatchingField) {
    const ImageBuffer A = white_noise(20, 20, 1, 1), B = white_noise(20, 20, 1, 2);
    KnnParams kp;
    kp.k = 2;
    const KnnField f = init_random_knn(A, B, PatchGeometry(), kp);
    EXPECT_FALSE(f.self_matching());
    EXPECT_THROW(forward_enrichment(f, A), InvalidArgument);
}

TEST(InverseEnrichment, BijectiveIdentityIsUnchanged) {
    const ImageBuffer A = white_noise(20, 20, 3, 1);
    const KnnField f = identity_field(A);
    EXPECT_EQ(inverse_enrichment(f), f);
}

TEST(InverseEnrichment, ReusesStoredDistance) {
    const ImageBuffer A = white_noise(30, 30, 1, 3);
    const PatchGeometry g;
    KnnField f(A.extent(), A.extent(), g, 2, true);
    const Rect r = f.source_rect();
    const Point a{5, 5}, b{20, 20};
    // b stores two far-away, artificially bad entries; a stores b.
    for (std::size_t i = 0; i < f.size(); ++i) {
        const Point z = r.at(i);
        f.heap(i)[0] = {z, 0.0};
        f.heap(i)[1] = {r.clamp(z + Point{1, 0}) == z ? z - Point{1, 0} : z + Point{1, 0}, 1e3};
        std::make_heap(f.heap(i).begin(), f.heap(i).end(), knn_heap::by_dist);
    }
    f.heap(a)[0] = {b, 7.5};
    f.heap(a)[1] = {a, 0.0};
    std::make_heap(f.heap(a).begin(), f.heap(a).end(), knn_heap::by_dist);
    f.heap(b)[0] = {Point{3, 3}, 100.0};
    f.heap(b)[1] = {Point{4, 3}, 90.0};
    std::make_heap(f.heap(b).begin(), f.heap(b).end(), knn_heap::by_dist);

    const KnnField out = inverse_enrichment(f);
    const auto s = out.sorted(r.index(b));
    EXPECT_EQ(s[0].target, a);
    EXPECT_EQ(s[0].dist, 7.5);
}

TEST(InverseEnrichment, UnreferencedCoordinateIsUnchanged) {
    const ImageBuffer A = white_noise(20, 20, 1, 4);
    KnnField f = identity_field(A);
    const Rect r = f.source_rect();
    // Every coordinate points at (3, 3), so (10, 10) is referenced by nobody.
    for (std::size_t i = 0; i < f.size(); ++i) {
        const Point z = r.at(i);
        f.heap(i)[0] = {Point{3, 3}, patch_distance(A, z, A, {3, 3}, f.geom())};
    }
    ASSERT_TRUE(inverse_lists(f)[r.index({10, 10})].empty());
    const KnnField out = inverse_enrichment(f);
    EXPECT_EQ(out.heap(Point{10, 10})[0], f.heap(Point{10, 10})[0]);
}

TEST(InverseEnrichment, NeverWorsensAndMatchesRecomputedDistances) {
    const ImageBuffer A = natural_scene(36, 36, 5);
    const KnnField f = random_self_field(A, 4, 3, 1);
    const KnnField reuse = inverse_enrichment(f);
    const KnnField recompute = inverse_enrichment(f, &A);
    expect_rankwise_not_worse(reuse, f);
    expect_valid_heaps(reuse, A);
    for (std::size_t i = 0; i < f.size(); ++i) {
        const auto a = reuse.sorted(i), b = recompute.sorted(i);
        for (std::size_t j = 0; j < a.size(); ++j) EXPECT_NEAR(a[j].dist, b[j].dist, 1e-9);
    }
}

TEST(Enrichment, CombinedScheduleConvergesInFewerSweeps) {
    const ImageBuffer A = natural_scene(64, 64, 9);
    KnnParams kp;
    kp.k = 8;
    kp.search.iterations = 4;
    KnnRunStats plain, enriched;
    compute_knn_enriched(A, PatchGeometry(), kp, EnrichmentSchedule::None, &plain);
    compute_knn_enriched(A, PatchGeometry(), kp, EnrichmentSchedule::InverseThenForward, &enriched);
    const double target = plain.mean_distance_per_sweep.back();
    int reached = -1;
    for (std::size_t i = 0; i < enriched.mean_distance_per_sweep.size(); ++i)
        if (enriched.mean_distance_per_sweep[i] <= target) {
            reached = int(i);
            break;
        }
    ASSERT_GE(reached, 0);
    EXPECT_LE(reached, 3);
    EXPECT_LE(enriched.mean_distance_per_sweep.back(), target);
}

TEST(BinIndex, ConstantImageFallsBackToSingleBucket) {
    const ImageBuffer A = constant_image(30, 30, 3, 0.4f);
    const BinIndex idx = build_bin_index(A, PatchGeometry());
    EXPECT_TRUE(idx.degenerate());
    ASSERT_EQ(idx.buckets().size(), 1u);
    EXPECT_EQ(idx.buckets().begin()->second.size(), PatchGeometry().valid_rect(A).area());
}

TEST(BinIndex, BucketsPartitionIndexedCoordinates) {
    const ImageBuffer A = natural_scene(60, 50, 2);
    for (int every : {1, 3}) {
        BinOptions o;
        o.index_every = every;
        const BinIndex idx = build_bin_index(A, PatchGeometry(), o);
        EXPECT_EQ(idx.bin_count(), 6561u);
        std::set<std::pair<int, int>> seen;
        std::size_t total = 0;
        for (const auto& [id, members] : idx.buckets()) {
            EXPECT_LT(id, 6561u);
            for (const Point p : members) {
                EXPECT_TRUE(seen.insert({p.x, p.y}).second);
                EXPECT_EQ(idx.bin_of(A, p), id);
            }
            total += members.size();
        }
        EXPECT_EQ(total, idx.indexed_count());
        EXPECT_EQ(total, (PatchGeometry().valid_rect(A).area() + std::size_t(every) - 1) / std::size_t(every));
    }
}

TEST(BinIndex, SeparatesTwoTextures) {
    // Left half: dark fine noise. Right half: bright smooth noise.
    const int w = 80, h = 60;
    ImageBuffer A(w, h, 3);
    const ImageBuffer n1 = white_noise(w, h, 3, 1), n2 = value_noise(w, h, 3, 2, 6, 2);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) A.at(x, y, c) = x < w / 2 ? 0.3f * n1.at(x, y, c) : 0.6f + 0.4f * n2.at(x, y, c);
    const BinIndex idx = build_bin_index(A, PatchGeometry());
    std::size_t counted = 0, pure = 0;
    for (const auto& [id, members] : idx.buckets()) {
        int left = 0, right = 0;
        for (const Point p : members) {
            if (std::abs(p.x - w / 2) <= 3) continue;  // patches straddling the seam
            (p.x < w / 2 ? left : right)++;
        }
        counted += std::size_t(left + right);
        if (left == 0 || right == 0) pure += std::size_t(left + right);
    }
    EXPECT_GE(double(pure) / double(counted), 0.90);
}

TEST(BinIndex, CandidateComesFromQueryBucket) {
    const ImageBuffer A = natural_scene(50, 50, 4);
    const BinIndex idx = build_bin_index(A, PatchGeometry());
    CounterRng rng(1);
    for (const Point z : {Point{10, 10}, Point{25, 30}, Point{40, 12}}) {
        const std::uint32_t id = idx.bin_of(A, z);
        for (int t = 0; t < 20; ++t) EXPECT_EQ(idx.bin_of(A, bin_candidate(idx, A, z, rng)), id);
    }
    // A bucket holding a single coordinate always returns it.
    for (const auto& [id, members] : idx.buckets()) {
        if (members.size() != 1) continue;
        EXPECT_EQ(bin_candidate(idx, A, members[0], rng), members[0]);
        break;
    }
}

TEST(BinIndex, Errors) {
    EXPECT_THROW(build_bin_index(ImageBuffer(8, 8, 1), PatchGeometry()), InvalidArgument);
    BinIndex empty;
    CounterRng rng(1);
    EXPECT_THROW(bin_candidate(empty, ImageBuffer(20, 20, 1), {10, 10}, rng), InvalidArgument);
}

TEST(BinIndex, NearestNonemptyMatchesExhaustiveSearch) {
    BinOptions opts;
    opts.dims = 3;
    opts.parts = 7;
    const BinIndex idx = build_bin_index(natural_scene(40, 30, 8), PatchGeometry(), opts);
    const auto parts = std::uint32_t(opts.parts);
    auto l1 = [&](std::uint32_t a, std::uint32_t b) {
        int d = 0;
        for (int k = 0; k < opts.dims; ++k, a /= parts, b /= parts) d += std::abs(int(a % parts) - int(b % parts));
        return d;
    };
    std::vector<std::uint32_t> nonempty;
    for (const auto& [id, pts] : idx.buckets()) nonempty.push_back(id);
    std::sort(nonempty.begin(), nonempty.end());
    ASSERT_LT(nonempty.size(), idx.bin_count());
    for (std::uint32_t id = 0; id < idx.bin_count(); ++id) {
        std::uint32_t want = nonempty.front();
        for (const std::uint32_t c : nonempty)
            if (l1(id, c) < l1(id, want)) want = c;
        ASSERT_EQ(idx.nearest_nonempty(id), want) << "cell " << id;
    }
    EXPECT_THROW(idx.nearest_nonempty(std::uint32_t(idx.bin_count())), InvalidArgument);
}
