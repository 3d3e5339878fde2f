#include <gtest/gtest.h>

#include <cmath>

#include "icc/error.hpp"
#include "icc/numeric.hpp"
#include "icc/toytrain.hpp"
#include "oracles.hpp"

using namespace icc;
using namespace icc::toytrain;

namespace {

SyntheticSpec small_spec(std::uint64_t seed = 3) {
    SyntheticSpec s;
    s.n_superclasses = 2;
    s.subclasses_per_superclass = 2;
    s.samples_per_subclass = 12;
    s.test_samples_per_subclass = 8;
    s.input_dim = 4;
    s.noise_dims = 2;
    s.superclass_separation = 4.0;
    s.subclass_separation = 2.0;
    s.seed = seed;
    return s;
}

ToyConfig small_cfg() {
    ToyConfig c;
    c.depth = 2;
    c.width = 8;
    c.learning_rate = 0.05;
    c.batch_size = 16;
    c.epochs = 20;
    c.seed = 5;
    return c;
}

std::vector<double> flat_params(const Network& net) {
    std::vector<double> out;
    for (const double* p : parameters(net)) out.push_back(*p);
    return out;
}

}  // namespace

TEST(Synthetic, CountsAndOrdering) {
    const auto spec = small_spec();
    const auto d = gen_synthetic(spec);
    EXPECT_EQ(d.train.inputs.rows(), 48u);
    EXPECT_EQ(d.test.inputs.rows(), 32u);
    EXPECT_EQ(d.train.inputs.cols(), 6u);
    EXPECT_EQ(d.n_outputs, 2u);
    ASSERT_TRUE(d.train.hierarchy.has_subclasses());
    EXPECT_EQ(d.train.hierarchy.n_subclasses(), 4);
    for (std::size_t i = 0; i < 48; ++i) {
        EXPECT_EQ((*d.train.hierarchy.subclass_of)[i], static_cast<int>(i / 12));
        EXPECT_EQ(d.train.targets[i], static_cast<int>(i / 24));
    }
    auto sub = spec;
    sub.label_mode = LabelMode::subclass_as_class;
    const auto ds = gen_synthetic(sub);
    EXPECT_EQ(ds.n_outputs, 4u);
    EXPECT_FALSE(ds.train.hierarchy.has_subclasses());
    EXPECT_EQ(ds.train.inputs.data(), d.train.inputs.data());
}

TEST(Synthetic, SpreadToZeroCollapsesOntoCenters) {
    auto spec = small_spec();
    spec.cluster_spread = 1e-9;
    const auto d = gen_synthetic(spec);
    for (std::size_t s = 0; s < 4; ++s)
        for (std::size_t k = 1; k < 12; ++k)
            for (std::size_t c = 0; c < spec.input_dim; ++c)
                EXPECT_NEAR(d.train.inputs(s * 12 + k, c), d.train.inputs(s * 12, c), 1e-7);
}

TEST(Synthetic, DeterministicAndSeedSensitive) {
    EXPECT_EQ(gen_synthetic(small_spec(1)).train.inputs.data(), gen_synthetic(small_spec(1)).train.inputs.data());
    EXPECT_NE(gen_synthetic(small_spec(1)).train.inputs.data(), gen_synthetic(small_spec(2)).train.inputs.data());
}

TEST(Synthetic, JsonRoundTripAndErrors) {
    auto s = small_spec();
    s.label_mode = LabelMode::subclass_as_class;
    const auto back = synthetic_from_json(to_json(s));
    EXPECT_EQ(to_json(back), to_json(s));
    EXPECT_THROW(synthetic_from_json({{"bogus", 1}}), FormatError);
    EXPECT_THROW(synthetic_from_json({{"label_mode", "neither"}}), FormatError);
    auto bad = s;
    bad.samples_per_subclass = 0;
    EXPECT_THROW(gen_synthetic(bad), ValidationError);
}

TEST(ToyConfigJson, RoundTripAndErrors) {
    auto c = small_cfg();
    c.optimizer = Optimizer::plain;
    c.lr_drop_epochs = {5, 10};
    EXPECT_EQ(to_json(config_from_json(to_json(c))), to_json(c));
    EXPECT_THROW(config_from_json({{"widht", 3}}), FormatError);
    EXPECT_THROW(config_from_json({{"optimizer", "adam"}}), FormatError);
    auto bad = c;
    bad.dropout_rate = 1.0;
    EXPECT_THROW(bad.validate(), ValidationError);
}

TEST(Gradients, MatchFiniteDifferences) {
    ToyConfig c;
    c.depth = 2;
    c.width = 5;
    const std::size_t in = 4, out = 3, batch = 7;
    Network net = init_network(c, in, out, 77);
    Rng rng(9);
    for (auto& l : net.hidden)
        for (std::size_t i = 0; i < l.gamma.size(); ++i) {
            l.gamma[i] = rng.uniform(0.5, 1.5);
            l.beta[i] = rng.uniform(-0.5, 0.5);
        }
    for (double& b : net.out_bias) b = rng.normal() * 0.1;
    Matrix x(batch, in);
    for (double& v : x.data()) v = rng.normal();
    const std::vector<int> y = {0, 1, 2, 1, 0, 2, 2};
    std::vector<Matrix> masks;
    for (std::size_t l = 0; l < 2; ++l) {
        Matrix m(batch, c.width);
        for (double& v : m.data()) v = rng.uniform() < 0.2 ? 0.0 : 1.25;
        masks.push_back(m);
    }
    const double wd = 0.03;

    Network grad;
    loss_and_gradients(net, x, y, wd, &grad, &masks);
    auto p = parameters(net);
    const auto g = parameters(static_cast<const Network&>(grad));
    ASSERT_EQ(p.size(), g.size());
    for (int probe = 0; probe < 20; ++probe) {
        const std::size_t i = rng.index(p.size());
        const double saved = *p[i], h = 1e-6;
        *p[i] = saved + h;
        const double up = loss_and_gradients(net, x, y, wd, nullptr, &masks);
        *p[i] = saved - h;
        const double down = loss_and_gradients(net, x, y, wd, nullptr, &masks);
        *p[i] = saved;
        const double numeric = (up - down) / (2 * h);
        const double denom = std::max({std::abs(numeric), std::abs(*g[i]), 1e-6});
        EXPECT_LT(std::abs(numeric - *g[i]) / denom, 1e-4) << "parameter " << i;
    }
}

TEST(Train, Deterministic) {
    const auto d = gen_synthetic(small_spec());
    const auto a = train(small_cfg(), d), b = train(small_cfg(), d);
    EXPECT_EQ(flat_params(a.net), flat_params(b.net));
    EXPECT_EQ(a.final_loss, b.final_loss);
    auto other = small_cfg();
    other.seed = 6;
    EXPECT_NE(flat_params(train(other, d).net), flat_params(a.net));
}

TEST(Train, LearnsSeparableData) {
    const auto d = gen_synthetic(small_spec());
    const auto m = train(small_cfg(), d);
    EXPECT_GE(m.train_accuracy, 0.95);
    EXPECT_LT(m.final_loss, m.snapshots.front().train_loss);
}

TEST(Train, ZeroLearningRateLeavesWeights) {
    const auto d = gen_synthetic(small_spec());
    auto c = small_cfg();
    c.learning_rate = 0.0;
    c.epochs = 3;
    const auto m = train(c, d);
    auto init = init_network(c, d.train.inputs.cols(), d.n_outputs, mix_seed(c.seed, 1));
    // Only the running statistics differ, so compare after recalibration.
    recalibrate(init, d.train.inputs);
    EXPECT_EQ(flat_params(m.net), flat_params(init));
    EXPECT_EQ(m.train_accuracy, accuracy(init, d.train));
    EXPECT_EQ(m.train_accuracy, m.snapshots.front().train_accuracy);
}

TEST(Train, FreshNetworkNormalizationBand) {
    const auto d = gen_synthetic(small_spec());
    auto c = small_cfg();
    c.depth = 3;
    auto net = init_network(c, d.train.inputs.cols(), d.n_outputs, 41);
    recalibrate(net, d.train.inputs);
    for (const auto& layer : hidden_preacts(net, d.train.inputs))
        for (std::size_t j = 0; j < layer.cols(); ++j) {
            const auto col = layer.column(j);
            EXPECT_LT(std::abs(oracle::mean(col)), 0.2);
            EXPECT_GE(oracle::pstd(col), 0.5);
            EXPECT_LE(oracle::pstd(col), 2.0);
        }
}

TEST(Train, RecalibratedStatsNormalizeTrainingSet) {
    const auto d = gen_synthetic(small_spec());
    const auto m = train(small_cfg(), d);
    const auto pre = hidden_preacts(m.net, d.train.inputs);
    for (std::size_t l = 0; l < pre.size(); ++l)
        for (std::size_t c = 0; c < pre[l].cols(); ++c) {
            const auto col = pre[l].column(c);
            const double gamma = m.net.hidden[l].gamma[c], beta = m.net.hidden[l].beta[c];
            EXPECT_NEAR(oracle::mean(col), beta, 1e-9);
            // Inference output std is |gamma| * sigma / sqrt(sigma^2 + eps): just under |gamma|
            // unless the incoming unit is constant.
            const double sd = oracle::pstd(col);
            EXPECT_LE(sd, std::abs(gamma) + 1e-12);
            if (sd > 1e-3 * std::abs(gamma)) EXPECT_GE(sd, 0.99 * std::abs(gamma));
        }
}

TEST(Train, EarlyStopAndSnapshots) {
    const auto d = gen_synthetic(small_spec());
    auto c = small_cfg();
    c.epochs = 50;
    c.early_stop_loss = 10.0;
    const auto m = train(c, d);
    EXPECT_TRUE(m.early_stopped);
    EXPECT_EQ(m.epochs_run, 1u);
    ASSERT_EQ(m.snapshots.size(), 2u);
    EXPECT_EQ(m.snapshots[1].epoch, 1u);

    c.early_stop_loss = 0.0;
    c.epochs = 20;
    const auto full = train(c, d);
    std::vector<std::size_t> epochs;
    for (const auto& s : full.snapshots) epochs.push_back(s.epoch);
    EXPECT_EQ(epochs, (std::vector<std::size_t>{0, 2, 4, 6, 8, 10, 12, 14, 16, 18, 20}));
}

TEST(Train, DisabledRegularizersAreInert) {
    const auto d = gen_synthetic(small_spec());
    auto a = small_cfg(), b = small_cfg();
    b.augment_noise = 0.7;  // augment stays off
    EXPECT_EQ(flat_params(train(a, d).net), flat_params(train(b, d).net));
    a.dropout_rate = 0.0;
    b = a;
    b.lr_drop_factor = 0.5;  // no drop epochs
    EXPECT_EQ(flat_params(train(a, d).net), flat_params(train(b, d).net));
}

TEST(Train, DivergenceNamesTheEpoch) {
    const auto d = gen_synthetic(small_spec());
    auto c = small_cfg();
    c.learning_rate = 1e300;
    c.weight_decay = 1e-3;
    try {
        train(c, d);
        FAIL() << "expected divergence";
    } catch (const ComputationError& e) {
        EXPECT_NE(std::string(e.what()).find("epoch 1"), std::string::npos) << e.what();
    }
}

TEST(Dump, ShapeMetricsAndEpochs) {
    const auto d = gen_synthetic(small_spec());
    auto c = small_cfg();
    c.depth = 3;
    c.width = 6;
    const auto m = train(c, d);
    const auto final_dump = dump_activations(m, d, std::nullopt, "m000");
    EXPECT_EQ(final_dump.n_neurons(), 18u);
    EXPECT_EQ(final_dump.n_layers(), 3u);
    EXPECT_EQ(final_dump.n_samples(), 48u);
    EXPECT_EQ(final_dump.layers[2].name, "hidden_2");
    ASSERT_TRUE(final_dump.metrics);
    EXPECT_EQ(final_dump.metrics->train_accuracy, m.train_accuracy);
    EXPECT_EQ(final_dump.hyperparams.at("width"), "6");
    for (double v : final_dump.layers[0].preacts.data()) EXPECT_EQ(v, static_cast<double>(static_cast<float>(v)));

    const auto first = dump_activations(m, d, 0, "m000");
    EXPECT_NE(first.layers[0].preacts.data(), final_dump.layers[0].preacts.data());
    EXPECT_EQ(first.metrics->train_accuracy, m.snapshots.front().train_accuracy);
    EXPECT_EQ(dump_activations(m, d, c.epochs, "m000").layers, final_dump.layers);
    EXPECT_THROW(dump_activations(m, d, 7, "m000"), ValidationError);
}
