#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fixtures.hpp"
#include "icc/error.hpp"
#include "icc/measures.hpp"
#include "icc/numeric.hpp"
#include "oracles.hpp"

using namespace icc;
using namespace icc::measures;
using store::ActivationDataset;
using store::LayerBlock;

namespace {

LayerBlock dense(const std::string& name, int index, std::size_t rows, std::size_t cols, std::vector<double> v) {
    LayerBlock b;
    b.name = name;
    b.layer_index = index;
    b.preacts = Matrix(rows, cols, std::move(v));
    return b;
}

MeasureConfig cfg_k(std::size_t k_neuron, std::size_t k_layer) {
    MeasureConfig c;
    c.k_neuron = k_neuron;
    c.k_layer = k_layer;
    return c;
}

}  // namespace

TEST(TopK, MeanOfLargest) {
    const std::vector<double> v = {3, 9, 1, 7, 5};
    EXPECT_EQ(top_k_mean(v, 1).value, 9.0);
    EXPECT_EQ(top_k_mean(v, 2).value, 8.0);
    EXPECT_EQ(top_k_mean(v, 5).value, 5.0);
    EXPECT_FALSE(top_k_mean(v, 5).clamped);
    const auto t = top_k_mean(v, 9);
    EXPECT_TRUE(t.clamped);
    EXPECT_EQ(t.value, 5.0);
    EXPECT_THROW(top_k_mean({}, 1), ComputationError);
}

TEST(TopK, NonIncreasingInK) {
    Rng rng(17);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> v(1 + rng.index(40));
        for (double& x : v) x = rng.normal() * 3.0;
        double prev = INFINITY;
        for (std::size_t k = 1; k <= v.size(); ++k) {
            const double t = top_k_mean(v, k).value;
            ASSERT_LE(t, prev);
            prev = t;
        }
    }
}

TEST(Selectivity, HandExample) {
    const std::vector<double> sub = {2, 4}, rest = {0, 2};
    const auto r = neuron_subclass_selectivity(sub, rest, 1e-12);
    EXPECT_NEAR(r.value, 1.0, 1e-12);
    EXPECT_FALSE(r.degenerate);
}

TEST(Selectivity, ZeroSpreadHitsEpsilonGuard) {
    const std::vector<double> sub = {1, 1}, rest = {1, 1};
    const auto r = neuron_subclass_selectivity(sub, rest, 1e-12);
    EXPECT_EQ(r.value, 0.0);
    EXPECT_TRUE(r.degenerate);
}

TEST(VarianceRatio, KnownRatio247) {
    // A class spread at +-2.47 inside a dataset whose population std is 1.
    std::vector<double> cls = {-2.47, 2.47};
    std::vector<double> all = cls;
    const double b = std::sqrt((14.0 - 2.0 * 2.47 * 2.47) / 12.0);
    for (int i = 0; i < 6; ++i) {
        all.push_back(b);
        all.push_back(-b);
    }
    ASSERT_NEAR(oracle::pstd(all), 1.0, 1e-14);
    EXPECT_NEAR(neuron_variance_ratio(cls, all, 1e-12).value, 2.47, 1e-11);
    const std::vector<double> unit = {-1.0, 1.0};
    EXPECT_EQ(neuron_variance_ratio(cls, unit, 0.0).value, 2.47);
}

TEST(Standardize, LeavesTopQuarterActive) {
    Matrix m(8, 1, std::vector<double>{10, 9, 1, 2, 3, 4, 5, 0});
    const auto s = standardize_neurons(m, 0.25);
    std::size_t active = 0;
    for (std::size_t r = 0; r < 8; ++r) active += s.values(r, 0) > 0.0;
    EXPECT_EQ(active, 2u);
    EXPECT_GT(s.values(0, 0), 0.0);
    EXPECT_GT(s.values(1, 0), 0.0);
    EXPECT_FALSE(s.degenerate[0]);
}

TEST(Standardize, ConstantNeuronIsDegenerate) {
    Matrix m(4, 2, std::vector<double>{1, 5, 2, 5, 3, 5, 4, 5});
    const auto s = standardize_neurons(m, 0.25);
    EXPECT_TRUE(s.degenerate[1]);
    for (std::size_t r = 0; r < 4; ++r) EXPECT_EQ(s.values(r, 1), 0.0);
}

TEST(Standardize, AffineInvariant) {
    Rng rng(5);
    Matrix m(20, 3);
    for (double& v : m.data()) v = rng.normal();
    Matrix t = m;
    for (std::size_t r = 0; r < 20; ++r) {
        t(r, 0) = 3.0 * m(r, 0) + 7.0;
        t(r, 1) = 0.01 * m(r, 1) - 2.0;
    }
    const auto a = standardize_neurons(m, 0.25), b = standardize_neurons(t, 0.25);
    for (std::size_t i = 0; i < a.values.data().size(); ++i) EXPECT_NEAR(a.values.data()[i], b.values.data()[i], 1e-9);
}

TEST(C1, HandAssembled) {
    // One superclass, subclasses {s0, s1}; neuron 0 favours s0, neuron 1 favours s1.
    auto ds = store::assemble("c1", {dense("l0", 0, 4, 2, {2, 0, 4, 1, 0, 1, 2, 2})},
                              store::hierarchical_labels({0, 0, 1, 1}, {0, 0}));
    EXPECT_NEAR(compute_c1(ds, cfg_k(1, 1)).value, 1.0, 1e-9);
    EXPECT_NEAR(compute_c1(ds, cfg_k(2, 1)).value, 0.0, 1e-9);
}

TEST(C2, HandAssembled) {
    // Subclass 0 at (1,0),(1,1); subclass 1 at (0,1).
    auto ds = store::assemble("c2", {dense("l0", 0, 3, 2, {1, 0, 1, 1, 0, 1})},
                              store::hierarchical_labels({0, 0, 1}, {0, 0}));
    const double h = 1.0 - 1.0 / std::sqrt(2.0);
    const double s0 = ((1.0 - h) + 0.0) / 2.0, s1 = 0.0;
    EXPECT_NEAR(compute_c2(ds, cfg_k(1, 1)).value, (s0 + s1) / 2.0, 1e-9);
}

TEST(C3, HandAssembled) {
    // Class A = {0, 2}, class B = {1, 1}: dataset std sqrt(1/2).
    auto ds = store::assemble("c3", {dense("l0", 0, 4, 1, {0, 2, 1, 1})}, store::flat_labels({0, 0, 1, 1}));
    EXPECT_NEAR(compute_c3(ds, cfg_k(1, 1)).value, (1.0 / std::sqrt(0.5) + 0.0) / 2.0, 1e-9);
}

TEST(C4, HandAssembled) {
    // One neuron; samples 0 and 1 (class A) are the only active ones after standardization.
    auto ds = store::assemble("c4", {dense("l0", 0, 8, 1, {10, 9, 1, 2, 3, 4, 5, 0})},
                              store::flat_labels({0, 0, 0, 0, 1, 1, 1, 1}));
    const double sigma_a = std::sqrt(5.0) / 6.0, sigma_b = 0.0, sigma_d = std::sqrt(27.0) / 28.0;
    EXPECT_NEAR(compute_c4(ds, cfg_k(1, 1)).value, (sigma_a / sigma_d + sigma_b / sigma_d) / 2.0, 1e-9);
}

TEST(Measures, MatchOraclesOnSmallRandomFixtures) {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const auto ds = fixture::random_dataset(seed, 2, 2, 2 + static_cast<int>(seed % 2), {3, 4, 2});
        for (std::size_t k : {1, 3, 5}) {
            const auto cfg = cfg_k(k, 1 + k % 3);
            EXPECT_NEAR(compute_c1(ds, cfg).value, oracle::c1(ds, k, cfg.epsilon), 1e-9);
            EXPECT_NEAR(compute_c2(ds, cfg).value, oracle::c2(ds, cfg.k_layer), 1e-9);
            EXPECT_NEAR(compute_c3(ds, cfg).value, oracle::c3(ds, k, cfg.epsilon), 1e-9);
            EXPECT_NEAR(compute_c4(ds, cfg).value, oracle::c4(ds, cfg.k_layer, 0.25, cfg.epsilon), 1e-9);
        }
    }
}

TEST(Measures, MatchOraclesOnLargerFixtures) {
    for (std::uint64_t seed = 100; seed < 105; ++seed) {
        const auto ds = fixture::random_dataset(seed, 3, 3, 6, {8, 6, 10});
        const auto cfg = cfg_k(7, 2);
        EXPECT_NEAR(compute_c1(ds, cfg).value, oracle::c1(ds, 7, cfg.epsilon), 1e-9);
        EXPECT_NEAR(compute_c2(ds, cfg).value, oracle::c2(ds, 2), 1e-9);
        EXPECT_NEAR(compute_c3(ds, cfg).value, oracle::c3(ds, 7, cfg.epsilon), 1e-9);
        EXPECT_NEAR(compute_c4(ds, cfg).value, oracle::c4(ds, 2, 0.25, cfg.epsilon), 1e-9);
    }
}

TEST(Measures, PositiveAffineNeuronTransformsInvariance) {
    Rng rng(8);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto ds = fixture::random_dataset(seed, 2, 3, 5, {6, 4});
        auto t = ds;
        for (auto& l : t.layers)
            for (std::size_t c = 0; c < l.preacts.cols(); ++c) {
                const double a = std::exp(rng.uniform(-2.0, 2.0)), b = rng.uniform(-5.0, 5.0);
                for (std::size_t r = 0; r < l.preacts.rows(); ++r) l.preacts(r, c) = a * l.preacts(r, c) + b;
            }
        const auto cfg = cfg_k(4, 1);
        EXPECT_NEAR(compute_c1(ds, cfg).value, compute_c1(t, cfg).value, 1e-9);
        EXPECT_NEAR(compute_c3(ds, cfg).value, compute_c3(t, cfg).value, 1e-9);
        EXPECT_NEAR(compute_c4(ds, cfg).value, compute_c4(t, cfg).value, 1e-9);
    }
}

TEST(Measures, PermutationInvarianceIsExact) {
    Rng rng(21);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto ds = fixture::random_dataset(seed, 2, 3, 5, {6, 4, 5});
        const std::size_t n = ds.n_samples();
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(perm);
        std::vector<int> sub(n);
        std::vector<store::LayerBlock> layers;
        for (std::size_t i = 0; i < n; ++i) sub[i] = (*ds.labels.subclass_of)[perm[i]];
        for (const auto& l : ds.layers) {
            auto b = l;
            std::vector<std::size_t> cols(l.preacts.cols());
            std::iota(cols.begin(), cols.end(), 0);
            rng.shuffle(cols);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t c = 0; c < cols.size(); ++c) b.preacts(i, c) = l.preacts(perm[i], cols[c]);
            layers.push_back(std::move(b));
        }
        std::reverse(layers.begin(), layers.end());
        for (std::size_t l = 0; l < layers.size(); ++l) layers[l].layer_index = static_cast<int>(l);
        const auto p = store::assemble("p", std::move(layers),
                                       store::hierarchical_labels(sub, *ds.labels.superclass_of_subclass));
        const auto cfg = cfg_k(4, 2);
        EXPECT_EQ(compute_c1(ds, cfg).value, compute_c1(p, cfg).value);
        EXPECT_EQ(compute_c2(ds, cfg).value, compute_c2(p, cfg).value);
        EXPECT_EQ(compute_c3(ds, cfg).value, compute_c3(p, cfg).value);
        EXPECT_EQ(compute_c4(ds, cfg).value, compute_c4(p, cfg).value);
    }
}

TEST(Measures, ClassWithOneSampleIsAnError) {
    auto ds = store::assemble("x", {dense("l0", 0, 3, 1, {0, 1, 2})}, store::flat_labels({0, 0, 1}));
    EXPECT_THROW(compute_c3(ds, cfg_k(1, 1)), ComputationError);
    EXPECT_THROW(compute_c4(ds, cfg_k(1, 1)), ComputationError);
}

TEST(Measures, HierarchyRequiredForC1C2) {
    auto ds = store::assemble("x", {dense("l0", 0, 6, 1, {0, 1, 2, 3, 5, 4})}, store::flat_labels({0, 0, 0, 1, 1, 1}));
    EXPECT_THROW(compute_c1(ds, cfg_k(1, 1)), ValidationError);
    EXPECT_THROW(compute_c2(ds, cfg_k(1, 1)), ValidationError);
    const auto r = compute_measures(ds, cfg_k(1, 1));
    EXPECT_FALSE(r.c1);
    EXPECT_FALSE(r.c2);
    EXPECT_TRUE(r.c3);
    EXPECT_TRUE(r.c4);
}

TEST(Measures, SkippedSubclassesFlagUnreliable) {
    // Subclass 2 has a single sample; one of three groups skipped (> 20%).
    auto ds = store::assemble("x", {dense("l0", 0, 5, 2, {0, 1, 1, 0, 2, 3, 3, 1, 5, 5})},
                              store::hierarchical_labels({0, 0, 1, 1, 2}, {0, 0, 0}));
    const auto mv = compute_c1(ds, cfg_k(1, 1));
    EXPECT_EQ(mv.diagnostics.groups_skipped, 1u);
    EXPECT_EQ(mv.diagnostics.groups_used, 2u);
    EXPECT_TRUE(mv.diagnostics.unreliable);
}

TEST(Measures, KClampIsFlagged) {
    const auto ds = fixture::random_dataset(1, 2, 2, 3, {2, 2});
    const auto mv = compute_c3(ds, cfg_k(30, 1));
    EXPECT_TRUE(mv.diagnostics.k_clamped);
    EXPECT_FALSE(compute_c3(ds, cfg_k(4, 1)).diagnostics.k_clamped);
}

TEST(Measures, SelectivityDistributionMedianIsC1WithK1) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto ds = fixture::random_dataset(seed, 2, 3, 4, {5, 5});
        const auto dist = selectivity_distribution(ds, cfg_k(1, 1));
        std::vector<double> sel;
        for (const auto& s : dist) sel.push_back(s.selectivity);
        EXPECT_EQ(median(sel), compute_c1(ds, cfg_k(1, 1)).value);
    }
}

TEST(Measures, PerLayerProfileUsesSingleLayerViews) {
    const auto ds = fixture::random_dataset(3, 2, 2, 4, {4, 6});
    MeasureConfig cfg;
    cfg.k_profile_neuron = 3;
    const auto profile = per_layer_profile(ds, cfg);
    ASSERT_EQ(profile.size(), 2u);
    for (std::size_t p = 0; p < 2; ++p) {
        const auto single = store::assemble("s", {ds.layers[p]}, ds.labels);
        EXPECT_NEAR(*profile[p].c1, oracle::c1(single, 3, cfg.epsilon), 1e-9);
        EXPECT_NEAR(*profile[p].c2, oracle::c2(single, 1), 1e-9);
        EXPECT_NEAR(*profile[p].c3, oracle::c3(single, 3, cfg.epsilon), 1e-9);
        EXPECT_NEAR(*profile[p].c4, oracle::c4(single, 1, 0.25, cfg.epsilon), 1e-9);
    }
}

TEST(Measures, ReportJsonShape) {
    const auto ds = fixture::random_dataset(4, 2, 2, 4, {4});
    MeasureSelection sel;
    sel.per_layer = true;
    sel.selectivity = true;
    const auto cfg = cfg_k(2, 1);
    const auto j = to_json(compute_measures(ds, cfg, sel), cfg);
    for (const char* m : {"c1", "c2", "c3", "c4"}) EXPECT_TRUE(j["measures"][m].is_number());
    EXPECT_EQ(j["per_layer"].size(), 1u);
    EXPECT_EQ(j["selectivity_distribution"].size(), 4u);
    EXPECT_EQ(j["config"]["k_neuron"], 2);
}

TEST(MeasureConfig, JsonRoundTripAndUnknownKeys) {
    MeasureConfig c;
    c.k_neuron = 7;
    c.seed = 99;
    const auto back = config_from_json(to_json(c));
    EXPECT_EQ(back.k_neuron, 7u);
    EXPECT_EQ(back.seed, 99u);
    EXPECT_THROW(config_from_json({{"k_nueron", 3}}), FormatError);
    MeasureConfig bad;
    bad.distance_cap = 2;
    EXPECT_THROW(bad.validate(), ValidationError);
}
