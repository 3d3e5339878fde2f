#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "icc/numeric.hpp"

using namespace icc;

TEST(ExactSum, RecoversCancelledTerms) {
    const std::vector<double> v = {1e100, 1.0, -1e100, 1e-3};
    EXPECT_EQ(exact_sum(v), 1.001);
}

TEST(ExactSum, IndependentOfOrder) {
    Rng rng(11);
    std::vector<double> v(500);
    for (double& x : v) x = rng.normal() * std::pow(10.0, static_cast<double>(rng.index(20)) - 10.0);
    const double reference = exact_sum(v);
    for (int trial = 0; trial < 20; ++trial) {
        rng.shuffle(v);
        EXPECT_EQ(exact_sum(v), reference);
    }
}

TEST(ExactSum, EmptyIsZero) { EXPECT_EQ(exact_sum({}), 0.0); }

TEST(MeanStd, PopulationConvention) {
    const std::vector<double> v = {2, 4, 4, 4, 5, 5, 7, 9};
    const auto ms = mean_std(v);
    EXPECT_DOUBLE_EQ(ms.mean, 5.0);
    EXPECT_DOUBLE_EQ(ms.stddev, 2.0);
}

TEST(Median, OddAndEvenCounts) {
    EXPECT_EQ(median({3, 1, 2}), 2.0);
    EXPECT_EQ(median({4, 1, 3, 2}), 2.5);
    EXPECT_THROW(median({}), std::invalid_argument);
}

TEST(Rng, DeterministicPerSeed) {
    Rng a(5), b(5), c(6);
    for (int i = 0; i < 100; ++i) {
        const double x = a.normal();
        EXPECT_EQ(x, b.normal());
        (void)c;
    }
    EXPECT_NE(Rng(5).next(), Rng(6).next());
}

TEST(Rng, UniformAndIndexRanges) {
    Rng rng(3);
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        ASSERT_LT(rng.index(7), 7u);
    }
}

TEST(Rng, NormalMoments) {
    Rng rng(99);
    std::vector<double> v(200000);
    for (double& x : v) x = rng.normal();
    const auto ms = mean_std(v);
    EXPECT_NEAR(ms.mean, 0.0, 0.01);
    EXPECT_NEAR(ms.stddev, 1.0, 0.01);
}

TEST(MixSeed, TagsSeparateStreams) {
    EXPECT_NE(mix_seed(1, 2), mix_seed(1, 3));
    EXPECT_NE(mix_seed(1, 2, 0), mix_seed(1, 2, 1));
    EXPECT_EQ(mix_seed(1, 2, 3, 4), mix_seed(1, 2, 3, 4));
}
