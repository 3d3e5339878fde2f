#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "icc/error.hpp"
#include "icc/geometry.hpp"
#include "icc/numeric.hpp"
#include "oracles.hpp"

using namespace icc;
using namespace icc::geometry;

namespace {

Matrix random_points(Rng& rng, std::size_t n, std::size_t dim, bool relu) {
    Matrix m(n, dim);
    for (double& v : m.data()) {
        v = rng.normal();
        if (relu) v = std::max(v, 0.0);
    }
    return m;
}

}  // namespace

TEST(CosineDistance, KnownValues) {
    const std::vector<double> x = {1, 0}, y = {0, 1}, xy = {1, 1}, z = {0, 0}, neg = {-2, 0};
    EXPECT_EQ(cosine_distance(x, x), 0.0);
    EXPECT_DOUBLE_EQ(cosine_distance(x, y), 1.0);
    EXPECT_NEAR(cosine_distance(x, xy), 1.0 - 1.0 / std::sqrt(2.0), 1e-15);
    EXPECT_DOUBLE_EQ(cosine_distance(x, neg), 2.0);
    EXPECT_EQ(cosine_distance(x, z), 1.0);
    EXPECT_EQ(cosine_distance(z, z), 1.0);
}

TEST(CosineDistanceMatrix, MatchesPerPairFormula) {
    Rng rng(1);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng.index(11), dim = 1 + rng.index(6);
        auto m = random_points(rng, n, dim, trial % 2 == 0);
        const auto dm = cosine_distance_matrix(m, kDefaultDistanceCap, 0);
        ASSERT_EQ(dm.n, n);
        for (std::size_t i = 0; i < n; ++i) {
            EXPECT_EQ(dm(i, i), 0.0);
            for (std::size_t j = 0; j < n; ++j) {
                if (i == j) continue;
                EXPECT_NEAR(dm(i, j), oracle::cosine(oracle::row(m, i), oracle::row(m, j)), 1e-12);
                EXPECT_EQ(dm(i, j), dm(j, i));
            }
        }
    }
}

TEST(CosineDistanceMatrix, RowSubsetKeepsSourceIds) {
    Rng rng(2);
    const auto m = random_points(rng, 10, 3, false);
    const std::vector<std::size_t> rows = {1, 4, 7};
    const auto dm = cosine_distance_matrix(m, rows, kDefaultDistanceCap, 0);
    EXPECT_EQ(dm.point_ids, rows);
    EXPECT_NEAR(dm(0, 2), oracle::cosine(oracle::row(m, 1), oracle::row(m, 7)), 1e-12);
}

TEST(Subsample, CapIsRespectedAndSorted) {
    const auto idx = subsample_indices(1000, 256, 42);
    ASSERT_EQ(idx.size(), 256u);
    EXPECT_TRUE(std::is_sorted(idx.begin(), idx.end()));
    EXPECT_EQ(std::set<std::size_t>(idx.begin(), idx.end()).size(), 256u);
    EXPECT_EQ(idx, subsample_indices(1000, 256, 42));
    EXPECT_NE(idx, subsample_indices(1000, 256, 43));
    const auto all = subsample_indices(10, 256, 42);
    std::vector<std::size_t> expected(10);
    std::iota(expected.begin(), expected.end(), 0);
    EXPECT_EQ(all, expected);
}

TEST(Silhouette, MatchesBruteForce) {
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 3 + rng.index(10), dim = 1 + rng.index(6);
        const auto m = random_points(rng, n, dim, trial % 3 == 0);
        std::vector<int> labels(n);
        for (auto& l : labels) l = static_cast<int>(rng.index(3));
        labels[0] = 0;
        labels[1] = 1;
        const auto dm = cosine_distance_matrix(m, kDefaultDistanceCap, 0);
        std::vector<std::size_t> all(n);
        std::iota(all.begin(), all.end(), 0);
        const auto d = oracle::distances(m, all);
        for (int target : {0, 1}) EXPECT_NEAR(silhouette_mean(dm, labels, target), oracle::silhouette_mean(d, labels, target), 1e-9);
    }
}

TEST(Silhouette, HandExample) {
    // (1,0),(1,1) in cluster 0 and (0,1) in cluster 1.
    Matrix m(3, 2, std::vector<double>{1, 0, 1, 1, 0, 1});
    const auto dm = cosine_distance_matrix(m, kDefaultDistanceCap, 0);
    const std::vector<int> labels = {0, 0, 1};
    const double h = 1.0 - 1.0 / std::sqrt(2.0);
    // point 0: a = h, b = 1; point 1: a = h, b = h.
    EXPECT_NEAR(silhouette_mean(dm, labels, 0), ((1.0 - h) / 1.0 + 0.0) / 2.0, 1e-12);
    EXPECT_EQ(silhouette_mean(dm, labels, 1), 0.0);  // singleton
}

TEST(Silhouette, NeedsTwoClusters) {
    Matrix m(2, 2, std::vector<double>{1, 0, 0, 1});
    const auto dm = cosine_distance_matrix(m, kDefaultDistanceCap, 0);
    const std::vector<int> labels = {0, 0};
    EXPECT_THROW(silhouette_mean(dm, labels, 0), ComputationError);
}

TEST(PairwiseStd, MatchesBruteForce) {
    Rng rng(4);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng.index(11), dim = 1 + rng.index(6);
        const auto m = random_points(rng, n, dim, trial % 2 == 0);
        std::vector<std::size_t> all(n);
        std::iota(all.begin(), all.end(), 0);
        EXPECT_NEAR(pairwise_distance_std(cosine_distance_matrix(m, kDefaultDistanceCap, 0)),
                    oracle::pairwise_std(oracle::distances(m, all)), 1e-9);
    }
}

TEST(PairwiseStd, IdenticalPointsHaveZeroSpread) {
    Matrix m(4, 2, std::vector<double>{1, 2, 1, 2, 1, 2, 1, 2});
    EXPECT_EQ(pairwise_distance_std(cosine_distance_matrix(m, kDefaultDistanceCap, 0)), 0.0);
}
