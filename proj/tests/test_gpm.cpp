#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <cstring>
#include <set>

#include "pm/annf/annf.hpp"
#include "pm/gpm/descriptor.hpp"
#include "pm/gpm/gnnf.hpp"
#include "pm/gpm/knn.hpp"
#include "support/fixtures.hpp"

using namespace pm;
using namespace pm::testing;

namespace {

constexpr double kPi = std::numbers::pi;

void expect_heap_invariants(const KnnField& f, const ImageBuffer& A, const ImageBuffer& B) {
    for (std::size_t i = 0; i < f.size(); ++i) {
        const auto h = f.heap(i);
        ASSERT_EQ(h.size(), std::size_t(f.k()));
        ASSERT_TRUE(std::is_heap(h.begin(), h.end(), knn_heap::by_dist));
        std::set<std::pair<int, int>> seen;
        for (const auto& e : h) {
            ASSERT_TRUE(f.target_rect().contains(e.target));
            ASSERT_TRUE(seen.insert({e.target.x, e.target.y}).second) << "duplicate target";
            ASSERT_LE(e.dist, h.front().dist);
            ASSERT_NEAR(e.dist, patch_distance(A, f.source_rect().at(i), B, e.target, f.geom()), 1e-9);
        }
    }
}

// Exact k-NN mean distance by sorting every candidate distance.
double exact_knn_mean(const ImageBuffer& A, const ImageBuffer& B, const PatchGeometry& g, int k) {
    const Rect src = g.valid_rect(A), dst = g.valid_rect(B);
    double total = 0;
    std::vector<double> d(dst.area());
    for (std::size_t i = 0; i < src.area(); ++i) {
        for (std::size_t t = 0; t < dst.area(); ++t) d[t] = patch_distance(A, src.at(i), B, dst.at(t), g);
        std::partial_sort(d.begin(), d.begin() + k, d.end());
        for (int j = 0; j < k; ++j) total += d[std::size_t(j)];
    }
    return total / double(src.area() * std::size_t(k));
}

}  // namespace

TEST(Jacobian, RotatedUnitStep) {
    GnnfEntry e{{20, 20}, float(kPi / 2), 1.0f, 0.0};
    EXPECT_EQ(jacobian_propagate(e, {1, 0}).target, (Point{20, 21}));
    e.theta = 0.0f;
    e.scale = 2.0f;
    EXPECT_EQ(jacobian_propagate(e, {1, 0}).target, (Point{22, 20}));
    e.scale = 1.0f;
    const GnnfEntry c = jacobian_propagate(e, {0, -1});
    EXPECT_EQ(c.target, (Point{20, 19}));
    EXPECT_EQ(c.theta, e.theta);
    EXPECT_EQ(c.scale, e.scale);
}

TEST(TransformedSampling, IdentityReturnsRawPatch) {
    const ImageBuffer B = white_noise(20, 20, 3, 1);
    const PatchGeometry g;
    const auto s = sample_transformed_patch(B, {9, 11}, 0.0, 1.0, g);
    std::size_t k = 0;
    for (int dy = -3; dy <= 3; ++dy)
        for (int dx = -3; dx <= 3; ++dx)
            for (int c = 0; c < 3; ++c) EXPECT_EQ(s[k++], B.at(9 + dx, 11 + dy, c));
    EXPECT_EQ(sample_transformed_patch(B, {9, 11}, 0.0, 1.0, g, SampleFilter::Nearest), s);
}

TEST(TransformedSampling, HalfTurnOfPointSymmetricPatch) {
    ImageBuffer B = white_noise(21, 21, 1, 2);
    for (int y = 0; y < 21; ++y)
        for (int x = 0; x < 21; ++x) B.at(20 - x, 20 - y, 0) = B.at(x, y, 0);
    const auto raw = sample_transformed_patch(B, {10, 10}, 0.0, 1.0, PatchGeometry());
    const auto rot = sample_transformed_patch(B, {10, 10}, kPi, 1.0, PatchGeometry());
    for (std::size_t i = 0; i < raw.size(); ++i) EXPECT_NEAR(rot[i], raw[i], 1e-6);
}

TEST(TransformedSampling, BilinearMatchesInterpolationFormula) {
    const ImageBuffer B = white_noise(30, 30, 2, 3);
    const double theta = 0.3, scale = 1.5;
    const Point c{15, 14};
    const auto s = sample_transformed_patch(B, c, theta, scale, PatchGeometry(5));
    std::size_t k = 0;
    for (int dy = -2; dy <= 2; ++dy) {
        for (int dx = -2; dx <= 2; ++dx) {
            const double px = c.x + scale * (std::cos(theta) * dx - std::sin(theta) * dy);
            const double py = c.y + scale * (std::sin(theta) * dx + std::cos(theta) * dy);
            const int x0 = int(std::floor(px)), y0 = int(std::floor(py));
            const double a = px - x0, b = py - y0;
            for (int ch = 0; ch < 2; ++ch) {
                const double v = (1 - a) * (1 - b) * B.at(x0, y0, ch) + a * (1 - b) * B.at(x0 + 1, y0, ch) +
                                 (1 - a) * b * B.at(x0, y0 + 1, ch) + a * b * B.at(x0 + 1, y0 + 1, ch);
                EXPECT_NEAR(s[k++], v, 1e-6);
            }
        }
    }
    // Half-pixel sample positions.
    const auto h = sample_transformed_patch(B, c, 0.0, 0.5, PatchGeometry(3));
    EXPECT_NEAR(h[0], 0.25 * (B.at(14, 13, 0) + B.at(15, 13, 0) + B.at(14, 14, 0) + B.at(15, 14, 0)), 1e-6);
}

TEST(TransformedSampling, FootprintOutsideImageThrows) {
    const ImageBuffer B(20, 20, 1);
    EXPECT_THROW(sample_transformed_patch(B, {3, 10}, kPi / 4, 1.0, PatchGeometry()), InvalidArgument);
    EXPECT_NO_THROW(sample_transformed_patch(B, {3, 10}, 0.0, 1.0, PatchGeometry()));
    EXPECT_THROW(sample_transformed_patch(B, {10, 10}, 0.0, 4.0, PatchGeometry()), InvalidArgument);
}

TEST(Gnnf, DegenerateRangeMatchesTranslation) {
    const auto [A, B] = similar_pair(90, 80, 5);
    GnnfParams gp;
    gp.search.seed = 3;
    const GeneralizedNnf g = compute_gnnf(A, B, PatchGeometry(), gp);
    const Nnf t = compute_nnf(A, B, PatchGeometry(), gp.search);
    EXPECT_NEAR(g.mean_distance(), t.mean_distance(), 0.01 * t.mean_distance());
    for (const auto& e : g.entries()) {
        EXPECT_EQ(e.theta, 0.0f);
        EXPECT_EQ(e.scale, 1.0f);
    }
}

TEST(Gnnf, RecoversQuarterTurn) {
    const ImageBuffer A = natural_scene(48, 48, 11);
    ImageBuffer B = value_noise(72, 72, 3, 12);
    paste(B, rotate90(A), 12, 12);
    GnnfParams gp;
    gp.range = {0.0, kPi, 1.0, 1.0};
    gp.search.iterations = 8;
    const GeneralizedNnf init = init_random_gnnf(A, B, PatchGeometry(), gp);
    const GeneralizedNnf f = compute_gnnf(A, B, PatchGeometry(), gp);
    EXPECT_LE(f.mean_distance(), 0.05 * init.mean_distance());
}

TEST(Gnnf, EntriesStayInRangeAndImproveMonotonically) {
    const auto [A, B] = similar_pair(50, 50, 6);
    GnnfParams gp;
    gp.range = {-0.5, 0.7, 0.8, 1.3};
    gp.search.seed = 8;
    GeneralizedNnf f = init_random_gnnf(A, B, PatchGeometry(), gp);
    for (int s = 0; s < 4; ++s) {
        const GeneralizedNnf before = f;
        iterate_gnnf(f, A, B, gp, s);
        for (std::size_t i = 0; i < f.size(); ++i) ASSERT_LE(f.entries()[i].dist, before.entries()[i].dist);
    }
    const Rect src = f.source_rect();
    for (std::size_t i = 0; i < f.size(); ++i) {
        const auto& e = f.entries()[i];
        ASSERT_GE(e.theta, -0.5f);
        ASSERT_LE(e.theta, 0.7f);
        ASSERT_GE(e.scale, 0.8f);
        ASSERT_LE(e.scale, 1.3f);
        ASSERT_TRUE(transformed_valid_rect(B.extent(), f.geom(), e.theta, e.scale).contains(e.target));
        ASSERT_NEAR(e.dist, transformed_patch_distance(A, src.at(i), B, e, f.geom()), 1e-9);
    }
}

TEST(Gnnf, IsDeterministicWithThreads) {
    const auto [A, B] = similar_pair(40, 40, 2);
    GnnfParams gp;
    gp.range = {-0.3, 0.3, 0.9, 1.1};
    gp.search.threads = 3;
    gp.search.iterations = 2;
    EXPECT_EQ(compute_gnnf(A, B, PatchGeometry(), gp), compute_gnnf(A, B, PatchGeometry(), gp));
}

TEST(Gnnf, RejectsBadRanges) {
    const ImageBuffer A(30, 30, 1), B(30, 30, 1);
    GnnfParams gp;
    gp.range = {1.0, 0.0, 1.0, 1.0};
    EXPECT_THROW(compute_gnnf(A, B, PatchGeometry(), gp), InvalidArgument);
    gp.range = {0.0, 0.0, 0.0, 1.0};
    EXPECT_THROW(compute_gnnf(A, B, PatchGeometry(), gp), InvalidArgument);
    gp.range = {0.0, 0.0, 1.0, 6.0};
    EXPECT_THROW(compute_gnnf(A, B, PatchGeometry(), gp), InvalidArgument);
}

TEST(Knn, SingleNeighborMatchesTranslationField) {
    const auto [A, B] = similar_pair(80, 70, 3);
    KnnParams kp;
    kp.k = 1;
    kp.search.seed = 5;
    const KnnField f = compute_knn(A, B, PatchGeometry(), kp);
    const Nnf t = compute_nnf(A, B, PatchGeometry(), kp.search);
    EXPECT_NEAR(f.mean_distance(), t.mean_distance(), 0.02 * t.mean_distance());
}

TEST(Knn, SelfMatchIsFoundAndKept) {
    const ImageBuffer A = natural_scene(40, 40, 4);
    KnnParams kp;
    kp.k = 16;
    kp.search.iterations = 6;
    const KnnField f = compute_knn(A, A, PatchGeometry(), kp);
    EXPECT_TRUE(f.self_matching());
    for (std::size_t i = 0; i < f.size(); ++i) {
        const auto s = f.sorted(i);
        ASSERT_EQ(s.front().dist, 0.0);
        ASSERT_EQ(s.front().target, f.source_rect().at(i));
    }
}

TEST(Knn, HeapInvariantsAndMonotoneRoots) {
    const auto [A, B] = similar_pair(40, 36, 9);
    KnnParams kp;
    kp.k = 6;
    KnnField f = init_random_knn(A, B, PatchGeometry(), kp);
    expect_heap_invariants(f, A, B);
    double prev_mean = f.mean_distance();
    for (int s = 0; s < 4; ++s) {
        const KnnField before = f;
        iterate_knn(f, A, B, kp, s);
        for (std::size_t i = 0; i < f.size(); ++i) ASSERT_LE(f.root(i).dist, before.root(i).dist);
        EXPECT_LE(f.mean_distance(), prev_mean);
        prev_mean = f.mean_distance();
    }
    expect_heap_invariants(f, A, B);
}

TEST(Knn, CloseToExactOnSmallInputs) {
    const auto [A, B] = similar_pair(32, 32, 14);
    KnnParams kp;
    kp.k = 16;
    kp.search.iterations = 8;
    const KnnField f = compute_knn(A, B, PatchGeometry(), kp);
    const double exact = exact_knn_mean(A, B, PatchGeometry(), 16);
    EXPECT_LE(f.mean_distance(), 1.10 * exact);
    EXPECT_NEAR(brute_force_knn(A, B, PatchGeometry(), 16).mean_distance(), exact, 1e-9 * exact);
}

TEST(Knn, StripParallelKeepsInvariants) {
    const auto [A, B] = similar_pair(48, 48, 1);
    KnnParams kp;
    kp.k = 4;
    kp.search.threads = 4;
    kp.search.iterations = 3;
    const KnnField f = compute_knn(A, B, PatchGeometry(), kp);
    expect_heap_invariants(f, A, B);
    EXPECT_EQ(f, compute_knn(A, B, PatchGeometry(), kp));
}

TEST(Knn, RejectsTooLargeK) {
    const ImageBuffer A(10, 10, 1);
    KnnParams kp;
    kp.k = 17;  // 4x4 valid targets
    EXPECT_THROW(compute_knn(A, A, PatchGeometry(), kp), InvalidArgument);
    kp.k = 16;
    EXPECT_NO_THROW(compute_knn(A, A, PatchGeometry(), kp));
}

TEST(Knn, DumpIsSortedAndRoundTrips) {
    const auto [A, B] = similar_pair(30, 30, 2);
    KnnParams kp;
    kp.k = 3;
    const KnnField f = compute_knn(A, B, PatchGeometry(), kp);
    const auto bytes = encode_knn(f);
    ASSERT_EQ(bytes.size(), 16 + f.size() * 3 * 8);
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "KNNF");
    EXPECT_EQ(bytes[14], 3);
    float prev = -1;
    for (int j = 0; j < 3; ++j) {
        float d;
        std::memcpy(&d, bytes.data() + 16 + j * 8 + 4, 4);
        EXPECT_GE(d, prev);
        prev = d;
    }
    const KnnField back = decode_knn(bytes, B.extent());
    for (std::size_t i = 0; i < f.size(); ++i) {
        const auto a = f.sorted(i), b = back.sorted(i);
        for (int j = 0; j < 3; ++j) {
            EXPECT_EQ(a[std::size_t(j)].target, b[std::size_t(j)].target);
            EXPECT_EQ(float(a[std::size_t(j)].dist), b[std::size_t(j)].dist);
        }
    }
    auto cut = bytes;
    cut.pop_back();
    EXPECT_THROW(decode_knn(cut, B.extent()), InputError);
}

TEST(Descriptors, RawSsdReproducesTranslationMatching) {
    const auto [A, B] = similar_pair(60, 50, 4);
    SearchParams p;
    p.seed = 21;
    const Nnf d = match_descriptors(raw_patch_descriptors(A, PatchGeometry()), raw_patch_descriptors(B, PatchGeometry()),
                                    descriptor_ssd, p);
    EXPECT_EQ(d, compute_nnf(A, B, PatchGeometry(), p));
}

TEST(Descriptors, AsymmetricDistanceStillImprovesMonotonically) {
    const auto [A, B] = similar_pair(48, 48, 5);
    const auto da = raw_patch_descriptors(A, PatchGeometry()), db = raw_patch_descriptors(B, PatchGeometry());
    // Only penalizes samples where A is brighter than B.
    const DescriptorDistance one_sided = [](std::span<const float> a, std::span<const float> b, double) {
        double s = 0;
        for (std::size_t i = 0; i < a.size(); ++i) s += std::pow(std::max(0.0, double(a[i]) - double(b[i])), 2);
        return s;
    };
    SearchParams p;
    Nnf prev;
    for (int it = 1; it <= 5; ++it) {
        p.iterations = it;
        const Nnf f = match_descriptors(da, db, one_sided, p);
        if (it > 1)
            for (std::size_t i = 0; i < f.size(); ++i) ASSERT_LE(f.entries()[i].dist, prev.entries()[i].dist);
        prev = f;
    }
}

TEST(Descriptors, NormalizedDescriptorIgnoresBrightnessShift) {
    ImageBuffer A = natural_scene(50, 50, 8);
    for (float& v : A.data()) v = 0.1f + 0.7f * v;
    ImageBuffer B = A;
    for (float& v : B.data()) v += 30.0f / 255.0f;
    SearchParams p;
    const Nnf f = match_descriptors(normalized_patch_descriptors(A, PatchGeometry()),
                                    normalized_patch_descriptors(B, PatchGeometry()), descriptor_ssd, p);
    EXPECT_LT(f.mean_distance(), 1e-6);
    const Nnf raw = compute_nnf(A, B, PatchGeometry(), p);
    EXPECT_GT(raw.mean_distance(), 100 * f.mean_distance());
}

TEST(Descriptors, LengthMismatchThrows) {
    const ImageBuffer A(20, 20, 1), B(20, 20, 3);
    EXPECT_THROW(match_descriptors(raw_patch_descriptors(A, PatchGeometry()), raw_patch_descriptors(B, PatchGeometry()),
                                   descriptor_ssd, SearchParams{}),
                 InvalidArgument);
}
