#include <hybridcast/lstm.hpp>

#include <gtest/gtest.h>

#include <cmath>

#include "oracles/finite_difference.hpp"
#include "support/fixtures.hpp"
#include "support/seeded.hpp"

using namespace hybridcast;
using namespace hybridcast::lstm;

using fixtures::seeded_net;

namespace {

data::WindowedDataset dataset_from(std::vector<Matrix> inputs, Matrix targets) {
    data::WindowedDataset ds;
    ds.n_in = inputs.front().rows();
    ds.n_features = inputs.front().cols();
    ds.n_out = targets.cols();
    for (std::size_t i = 0; i < inputs.size(); ++i) ds.origins.push_back(i);
    ds.inputs = std::move(inputs);
    ds.targets = std::move(targets);
    return ds;
}

/// Windows of a random walk in [0, 1] whose target is the window's last value.
data::WindowedDataset last_value_task(std::size_t N, std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Matrix> xs;
    Matrix y(N, 1);
    for (std::size_t i = 0; i < N; ++i) {
        Matrix x(n, 1);
        for (std::size_t t = 0; t < n; ++t) x(t, 0) = rng.uniform01();
        y(i, 0) = x(n - 1, 0);
        xs.push_back(std::move(x));
    }
    return dataset_from(std::move(xs), std::move(y));
}

}  // namespace

TEST(CellForward, ZeroWeightsZeroStateIsFixedPoint) {
    const auto p = LstmParams::zeros(4, 3);
    const Vector x{0.3, -1.0, 2.0};
    auto [state, cache] = cell_forward(p, x, LstmState::zeros(4));
    for (std::size_t j = 0; j < 4; ++j) {
        EXPECT_EQ(state.hidden[j], 0.0);
        EXPECT_EQ(state.cell[j], 0.0);
        EXPECT_EQ(cache.forget[j], 0.5);
        EXPECT_EQ(cache.input[j], 0.5);
        EXPECT_EQ(cache.output[j], 0.5);
        EXPECT_EQ(cache.candidate[j], 0.0);
    }
}

TEST(CellForward, CellTwoClosedForm) {
    const auto p = LstmParams::zeros(3, 2);
    LstmState prev{Vector(3, 0.0), Vector(3, 2.0)};
    auto [state, cache] = cell_forward(p, Vector{1.0, -1.0}, prev);
    for (std::size_t j = 0; j < 3; ++j) {
        EXPECT_EQ(state.cell[j], 1.0);
        EXPECT_NEAR(state.hidden[j], 0.3807970780, 1e-9);
    }
}

TEST(CellForward, WrongInputLength) {
    const auto p = LstmParams::zeros(3, 2);
    EXPECT_THROW(cell_forward(p, Vector{1.0, 2.0, 3.0}, LstmState::zeros(3)), ShapeError);
}

TEST(CellForward, MatchesHandWrittenEquations) {
    const auto p = seeded_net(3, 2, 17);
    LstmState prev{{0.1, -0.2, 0.3}, {0.5, -0.4, 0.05}};
    const Vector x{0.7, -0.9};
    auto [state, cache] = cell_forward(p, x, prev);
    const Vector z{0.1, -0.2, 0.3, 0.7, -0.9};
    auto affine = [&](const Gate& g, std::size_t j) {
        double a = g.bias[j];
        for (std::size_t c = 0; c < z.size(); ++c) a += g.weights(j, c) * z[c];
        return a;
    };
    for (std::size_t j = 0; j < 3; ++j) {
        const double f = 1.0 / (1.0 + std::exp(-affine(p.forget, j)));
        const double i = 1.0 / (1.0 + std::exp(-affine(p.input_gate, j)));
        const double g = std::tanh(affine(p.candidate, j));
        const double o = 1.0 / (1.0 + std::exp(-affine(p.output, j)));
        const double c = f * prev.cell[j] + i * g;
        EXPECT_NEAR(state.cell[j], c, 1e-15);
        EXPECT_NEAR(state.hidden[j], o * std::tanh(c), 1e-15);
    }
}

TEST(CellForward, GatesStayInRange) {
    const auto p = seeded_net(6, 3, 99);
    Rng rng(5);
    const Matrix x = seeded_uniform(rng, 40, 3, 3.0);
    const auto out = sequence_forward(p, x);
    for (const auto& s : out.cache.steps) {
        for (std::size_t j = 0; j < 6; ++j) {
            EXPECT_GT(s.forget[j], 0.0);
            EXPECT_LT(s.forget[j], 1.0);
            EXPECT_GT(s.input[j], 0.0);
            EXPECT_LT(s.input[j], 1.0);
            EXPECT_GT(s.output[j], 0.0);
            EXPECT_LT(s.output[j], 1.0);
            EXPECT_GT(s.candidate[j], -1.0);
            EXPECT_LT(s.candidate[j], 1.0);
            EXPECT_LE(std::abs(s.hidden[j]), 1.0);
        }
    }
}

TEST(SequenceForward, SingleStepEqualsCell) {
    const auto p = seeded_net(4, 2, 3);
    const Matrix x{{0.25, -0.5}};
    const auto seq = sequence_forward(p, x);
    const auto [state, cache] = cell_forward(p, x.row(0), LstmState::zeros(4));
    EXPECT_EQ(seq.final_hidden, state.hidden);
    EXPECT_EQ(seq.final_cell, state.cell);
}

TEST(SequenceForward, ZeroWeightsGiveZeroLatent) {
    Rng rng(8);
    const Matrix x = seeded_uniform(rng, 10, 3, 5.0);
    for (double h : sequence_forward(LstmParams::zeros(5, 3), x).final_hidden) EXPECT_EQ(h, 0.0);
}

TEST(SequenceForward, OrderSensitive) {
    const auto p = seeded_net(5, 2, 21);
    const Matrix x{{0.1, 0.9}, {0.5, -0.3}, {-0.7, 0.2}, {0.4, 0.4}};
    const Matrix reversed{{0.4, 0.4}, {-0.7, 0.2}, {0.5, -0.3}, {0.1, 0.9}};
    EXPECT_NE(sequence_forward(p, x).final_hidden, sequence_forward(p, reversed).final_hidden);
}

TEST(SequenceForward, Pure) {
    const auto p = seeded_net(5, 2, 21);
    Rng rng(1);
    const Matrix x = seeded_uniform(rng, 12, 2, 1.0);
    EXPECT_EQ(sequence_forward(p, x).final_hidden, sequence_forward(p, x).final_hidden);
}

TEST(SequenceForward, SaturatedForgetGatePreservesMemory) {
    auto p = LstmParams::zeros(4, 2);
    std::fill(p.forget.bias.begin(), p.forget.bias.end(), 50.0);
    std::fill(p.input_gate.bias.begin(), p.input_gate.bias.end(), -50.0);
    Rng rng(2);
    const Matrix x = seeded_uniform(rng, 50, 2, 1.0);
    const LstmState init{Vector(4, 0.0), Vector{0.8, -0.3, 1.5, 0.0}};
    const auto out = sequence_forward(p, x, init);
    for (std::size_t j = 0; j < 4; ++j) EXPECT_LT(std::abs(out.final_cell[j] - init.cell[j]), 1e-3);
}

TEST(SequenceBackward, MatchesFiniteDifferences) {
    const auto p = seeded_net(5, 3, 42);
    Rng rng(4242);
    const Matrix x = seeded_uniform(rng, 4, 3, 1.0);
    const Vector c{0.7, -1.3, 0.4, 2.0, -0.6};
    const auto fwd = sequence_forward(p, x);
    auto analytic = sequence_backward(p, fwd.cache, c);
    const auto numeric = oracles::central_differences(p, x, c, 1e-5);
    const auto arrays = analytic.arrays();
    ASSERT_EQ(arrays.size(), numeric.size());
    double worst = 0.0;
    for (std::size_t a = 0; a < arrays.size(); ++a) {
        for (std::size_t i = 0; i < arrays[a].size(); ++i) {
            worst = std::max(worst, oracles::relative_error(arrays[a][i], numeric[a][i]));
        }
    }
    EXPECT_LT(worst, 1e-4);
}

TEST(SequenceBackward, ZeroUpstreamGradient) {
    const auto p = seeded_net(5, 3, 1);
    Rng rng(2);
    const auto fwd = sequence_forward(p, seeded_uniform(rng, 6, 3, 1.0));
    auto g = sequence_backward(p, fwd.cache, Vector(5, 0.0));
    for (auto a : g.arrays())
        for (double v : a) EXPECT_EQ(v, 0.0);
}

TEST(SequenceBackward, Deterministic) {
    const auto p = seeded_net(5, 3, 1);
    Rng rng(2);
    const auto fwd = sequence_forward(p, seeded_uniform(rng, 6, 3, 1.0));
    const Vector c(5, 1.0);
    EXPECT_EQ(sequence_backward(p, fwd.cache, c), sequence_backward(p, fwd.cache, c));
}

TEST(SequenceBackward, MismatchedCacheRejected) {
    const auto p = seeded_net(5, 3, 1);
    const auto other = seeded_net(4, 3, 1);
    Rng rng(2);
    const auto fwd = sequence_forward(other, seeded_uniform(rng, 3, 3, 1.0));
    EXPECT_THROW(sequence_backward(p, fwd.cache, Vector(5, 1.0)), ShapeError);
    const auto own = sequence_forward(p, seeded_uniform(rng, 3, 3, 1.0));
    EXPECT_THROW(sequence_backward(p, own.cache, Vector(4, 1.0)), ShapeError);
}

TEST(Params, ValidateNamesOffendingGate) {
    auto p = LstmParams::zeros(3, 2);
    p.candidate.weights = Matrix(3, 4);
    try {
        p.validate();
        FAIL();
    } catch (const ShapeError& e) {
        EXPECT_NE(std::string(e.what()).find("candidate"), std::string::npos) << e.what();
    }
}

TEST(Params, InitializationScheme) {
    Rng rng(42);
    const auto p = LstmParams::initialize(8, 4, rng);
    const double bound = 1.0 / std::sqrt(12.0);
    for (const Gate* g : p.gates())
        for (double w : g->weights.data()) EXPECT_LE(std::abs(w), bound);
    for (double b : p.forget.bias) EXPECT_EQ(b, 1.0);
    for (double b : p.input_gate.bias) EXPECT_EQ(b, 0.0);
    for (double b : p.candidate.bias) EXPECT_EQ(b, 0.0);
    for (double b : p.output.bias) EXPECT_EQ(b, 0.0);
}

TEST(Train, LearnsLastValue) {
    const auto ds = last_value_task(64, 5, 7);
    TrainConfig cfg;
    cfg.hidden = 8;
    cfg.epochs = 200;
    const auto res = train(ds, cfg);
    ASSERT_EQ(res.loss_history.size(), 200u);
    // loss_history holds pre-update losses; evaluate the final parameters directly.
    double mse = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const double e = res.head.apply(sequence_forward(res.params, ds.inputs[i]).final_hidden)[0] - ds.targets(i, 0);
        mse += e * e;
    }
    EXPECT_LT(mse / static_cast<double>(ds.size()), 1e-3);
    EXPECT_LT(res.loss_history.back(), res.loss_history.front());
}

TEST(Train, ZeroLearningRateKeepsLossConstant) {
    const auto ds = last_value_task(16, 4, 3);
    TrainConfig cfg;
    cfg.hidden = 4;
    cfg.epochs = 5;
    cfg.learning_rate = 0.0;
    const auto res = train(ds, cfg);
    for (double l : res.loss_history) EXPECT_EQ(l, res.loss_history.front());
}

TEST(Train, DeterministicPerSeed) {
    const auto ds = last_value_task(16, 4, 3);
    TrainConfig cfg;
    cfg.hidden = 4;
    cfg.epochs = 10;
    const auto a = train(ds, cfg);
    const auto b = train(ds, cfg);
    EXPECT_EQ(a.loss_history, b.loss_history);
    EXPECT_EQ(a.params, b.params);
    cfg.seed = 43;
    EXPECT_NE(train(ds, cfg).loss_history, a.loss_history);
}

TEST(Train, SgdAndMiniBatchesRun) {
    const auto ds = last_value_task(20, 4, 3);
    TrainConfig cfg;
    cfg.hidden = 4;
    cfg.epochs = 30;
    cfg.optimizer = Optimizer::sgd;
    cfg.learning_rate = 0.5;
    cfg.batch_size = 7;
    const auto res = train(ds, cfg);
    EXPECT_LT(res.loss_history.back(), res.loss_history.front());
}

TEST(Train, DivergenceReportsEpoch) {
    auto ds = last_value_task(8, 3, 3);
    ds.targets(0, 0) = 1e300;
    TrainConfig cfg;
    cfg.hidden = 3;
    cfg.epochs = 3;
    try {
        train(ds, cfg);
        FAIL();
    } catch (const TrainingError& e) {
        EXPECT_EQ(e.epoch(), 1u);
    }
}

TEST(Train, RejectsBadConfig) {
    const auto ds = last_value_task(8, 3, 3);
    TrainConfig cfg;
    cfg.epochs = 0;
    EXPECT_THROW(train(ds, cfg), ConfigError);
    cfg.epochs = 1;
    cfg.learning_rate = -1.0;
    EXPECT_THROW(train(ds, cfg), ConfigError);
}

TEST(Latents, Examples) {
    const auto p = seeded_net(6, 1, 5);
    auto ds = last_value_task(5, 4, 9);
    ds.inputs[3] = ds.inputs[1];
    const Matrix z = extract_latents(p, ds);
    ASSERT_EQ(z.rows(), 5u);
    ASSERT_EQ(z.cols(), 6u);
    for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(z(1, j), z(3, j));
    for (std::size_t i = 0; i < 5; ++i) {
        const auto h = sequence_forward(p, ds.inputs[i]).final_hidden;
        for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(z(i, j), h[j]);
    }
    const Matrix zero = extract_latents(LstmParams::zeros(6, 1), ds);
    for (double v : zero.data()) EXPECT_EQ(v, 0.0);

    data::WindowedDataset empty;
    empty.n_features = 1;
    const Matrix e = extract_latents(p, empty);
    EXPECT_EQ(e.rows(), 0u);
    EXPECT_EQ(e.cols(), 6u);
}
