#include "leakaudit/nn.hpp"
#include "leakaudit/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

using namespace leakaudit;

namespace {

Matrix random_matrix(int rows, int cols, std::uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    std::normal_distribution<double> n(0.0, scale);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    return m;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), {}};
}

}  // namespace

TEST(Forward, ZeroParametersGiveZeroLogits) {
    MlpModel model = make_mlp(5, 8, 2, 3);
    std::fill(model.params().begin(), model.params().end(), 0.0);
    const Matrix out = predict(model, random_matrix(6, 5, 1));
    EXPECT_EQ(out.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Forward, LeakyReluAtMinusOne) {
    MlpModel model({LayerSpec::leakyrelu(1, 0.01)});
    Matrix x(1, 1);
    x << -1.0;
    EXPECT_DOUBLE_EQ(predict(model, x)(0, 0), -0.01);
}

TEST(Forward, MatchesStraightLineOracle) {
    // linear(3->4) -> leakyrelu(0.1) -> linear(4->2), batch of 4
    MlpModel model({LayerSpec::linear(3, 4), LayerSpec::leakyrelu(4, 0.1), LayerSpec::linear(4, 2)});
    model.initialize(11);
    for (double& p : model.params()) p += 0.05;  // nonzero biases
    const Matrix x = random_matrix(4, 3, 2);
    const Matrix out = predict(model, x);

    const auto& p = model.params();
    const std::size_t o2 = model.param_offset(2);
    for (int r = 0; r < 4; ++r) {
        double h[4];
        for (int j = 0; j < 4; ++j) {
            double s = p[12 + j];  // bias after the 4x3 weight block
            for (int k = 0; k < 3; ++k) s += p[j * 3 + k] * x(r, k);
            h[j] = s > 0 ? s : 0.1 * s;
        }
        for (int o = 0; o < 2; ++o) {
            double s = p[o2 + 8 + o];
            for (int j = 0; j < 4; ++j) s += p[o2 + o * 4 + j] * h[j];
            EXPECT_NEAR(out(r, o), s, 1e-12);
        }
    }
}

TEST(Forward, RejectsWidthMismatch) {
    MlpModel model = make_mlp(5, 8, 1, 2);
    EXPECT_THROW(forward(model, random_matrix(3, 4, 1), Mode::eval), std::invalid_argument);
}

TEST(Forward, RejectsSingleExampleTrainBatchWithBatchnorm) {
    MlpModel model = make_mlp(5, 8, 1, 2);
    EXPECT_THROW(forward(model, random_matrix(1, 5, 1), Mode::train), std::invalid_argument);
    EXPECT_NO_THROW(forward(model, random_matrix(1, 5, 1), Mode::eval));
}

TEST(Forward, TrainBatchnormNormalizesBeforeAffine) {
    MlpModel model({LayerSpec::batchnorm(6)});
    model.initialize(3);
    for (int seed = 0; seed < 5; ++seed) {
        const Matrix x = (random_matrix(32, 6, 100 + seed, 2.0).array() + 3.0).matrix();
        const ForwardTrace t = forward(model, x, Mode::train);
        const Matrix& xhat = t.bn_xhat[0];
        for (int c = 0; c < 6; ++c) {
            const double mean = xhat.col(c).mean();
            const double var = (xhat.col(c).array() - mean).square().mean();
            EXPECT_NEAR(mean, 0.0, 1e-5);
            EXPECT_NEAR(var, 1.0, 1e-5);
        }
    }
}

TEST(Forward, EvalModeHasNoCrossExampleCoupling) {
    MlpModel model = make_mlp(4, 16, 2, 3);
    model.initialize(5);
    // give running stats non-trivial values
    for (int k = 0; k < 3; ++k) update_running_stats(model, forward(model, random_matrix(16, 4, 40 + k), Mode::train));
    const Matrix x = random_matrix(7, 4, 9);
    const Matrix all = predict(model, x);
    for (int r = 0; r < 7; ++r) {
        const Matrix one = predict(model, x.row(r));
        for (int c = 0; c < 3; ++c) EXPECT_NEAR(one(0, c), all(r, c), 1e-13);
    }
}

TEST(Forward, IsPure) {
    MlpModel model = make_mlp(4, 8, 2, 2);
    model.initialize(1);
    const MlpModel before = model;
    const Matrix x = random_matrix(8, 4, 3);
    const Matrix a = forward(model, x, Mode::train).output();
    const Matrix b = forward(model, x, Mode::train).output();
    EXPECT_EQ(a, b);
    EXPECT_TRUE(model == before);
}

TEST(Backward, ZeroOutputGradGivesZeroGradient) {
    MlpModel model = make_mlp(4, 8, 2, 3);
    model.initialize(2);
    const ForwardTrace t = forward(model, random_matrix(5, 4, 1), Mode::train);
    const Gradients g = backward(model, t, Matrix::Zero(5, 3));
    for (double v : g.params) EXPECT_EQ(v, 0.0);
}

TEST(Backward, SingleLinearLayerClosedForm) {
    MlpModel model({LayerSpec::linear(3, 2)});
    model.initialize(4);
    Matrix x(1, 3);
    x << 0.5, -1.0, 2.0;
    Matrix target(1, 2);
    target << 0.3, -0.7;
    const ForwardTrace t = forward(model, x, Mode::train);
    const LossValue lv = squared_error(t.output(), target);
    const Gradients g = backward(model, t, lv.grad);
    // d/dW 0.5|Wx + b - t|^2 = (Wx + b - t) x^T ; d/db = (Wx + b - t)
    const auto& p = model.params();
    for (int o = 0; o < 2; ++o) {
        double r = p[6 + o] - target(0, o);
        for (int k = 0; k < 3; ++k) r += p[o * 3 + k] * x(0, k);
        for (int k = 0; k < 3; ++k) EXPECT_NEAR(g.params[o * 3 + k], r * x(0, k), 1e-14);
        EXPECT_NEAR(g.params[6 + o], r, 1e-14);
    }
}

TEST(Backward, RejectsStaleActivations) {
    MlpModel model = make_mlp(4, 8, 1, 3);
    model.initialize(2);
    const ForwardTrace t = forward(model, random_matrix(5, 4, 1), Mode::train);
    EXPECT_THROW(backward(model, t, Matrix::Zero(6, 3)), std::invalid_argument);
}

TEST(Backward, FourLayerModelMatchesFiniteDifferences) {
    MlpModel model = make_mlp(6, 12, 3, 4);
    model.initialize(8);
    const Matrix x = random_matrix(8, 6, 3);
    LossTargets targets;
    targets.classes = {0, 1, 2, 3, 0, 1, 2, 3};
    const GradCheckResult r = grad_check(model, x, LossKind::softmax_ce, targets, 1e-5);
    EXPECT_LT(r.max_rel_error, 1e-4);
    EXPECT_GT(r.checked, model.params().size() / 2);
}

TEST(Backward, PropertyFiniteDifferencesOverSeeds) {
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        Rng rng(seed);
        const int in = 2 + static_cast<int>(rng() % 10);
        const int hidden = 4 + static_cast<int>(rng() % 12);
        const int out = 1 + static_cast<int>(rng() % 5);
        MlpModel model = make_mlp(in, hidden, 2, out);
        model.initialize(derive_seed(seed, "init"));
        const Matrix x = random_matrix(8, in, derive_seed(seed, "x"));
        LossTargets targets;
        targets.dense = (random_matrix(8, out, derive_seed(seed, "t")).array() > 0).cast<double>();
        const GradCheckResult r = grad_check(model, x, LossKind::sigmoid_bce, targets, 1e-5);
        EXPECT_LT(r.max_rel_error, 1e-4) << "seed " << seed;
    }
}

TEST(Backward, TapGradientEqualsFiniteDifferenceOfTappedLoss) {
    // Loss = sum(output) + 0.5 * |h|^2 where h is the block-1 output.
    MlpModel model = make_mlp(3, 5, 2, 2);
    model.initialize(21);
    const Matrix x = random_matrix(6, 3, 22);
    auto total_loss = [&](const MlpModel& m) {
        const ForwardTrace t = forward(m, x, Mode::train);
        return t.output().sum() + 0.5 * t.activations[block_output_index(1)].squaredNorm();
    };
    const ForwardTrace t = forward(model, x, Mode::train);
    const Matrix ones = Matrix::Ones(6, 2);
    const Matrix tap = t.activations[block_output_index(1)];
    const TapGrad taps[] = {{block_output_index(1), &tap}};
    const Gradients g = backward(model, t, ones, taps);
    MlpModel probe = model;
    for (std::size_t i = 0; i < model.params().size(); i += 3) {
        const double orig = probe.params()[i];
        probe.params()[i] = orig + 1e-6;
        const double lp = total_loss(probe);
        probe.params()[i] = orig - 1e-6;
        const double lm = total_loss(probe);
        probe.params()[i] = orig;
        const double numeric = (lp - lm) / 2e-6;
        EXPECT_NEAR(g.params[i], numeric, 1e-5 * std::max(1.0, std::abs(numeric)));
    }
}

TEST(Backward, InputGradientMatchesFiniteDifferences) {
    MlpModel model = make_mlp(4, 6, 1, 2);
    model.initialize(31);
    model.set_mode(Mode::eval);
    Matrix x = random_matrix(3, 4, 32);
    const ForwardTrace t = forward(model, x, Mode::eval);
    const Gradients g = backward(model, t, Matrix::Ones(3, 2));
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double orig = x.data()[i];
        x.data()[i] = orig + 1e-6;
        const double lp = predict(model, x).sum();
        x.data()[i] = orig - 1e-6;
        const double lm = predict(model, x).sum();
        x.data()[i] = orig;
        EXPECT_NEAR(g.input.data()[i], (lp - lm) / 2e-6, 1e-6);
    }
}

TEST(Losses, SoftmaxGradientRowsSumToZero) {
    const Matrix logits = random_matrix(4, 3, 7);
    const std::vector<int> cls = {0, 2, 1, 1};
    const LossValue lv = softmax_cross_entropy(logits, cls);
    for (int r = 0; r < 4; ++r) EXPECT_NEAR(lv.grad.row(r).sum(), 0.0, 1e-15);
    EXPECT_GT(lv.value, 0.0);
}

TEST(Losses, BceIsStableForLargeLogits) {
    Matrix logits(1, 2);
    logits << 800.0, -800.0;
    Matrix t(1, 2);
    t << 1.0, 0.0;
    const LossValue lv = sigmoid_bce_with_logits(logits, t);
    EXPECT_TRUE(std::isfinite(lv.value));
    EXPECT_NEAR(lv.value, 0.0, 1e-300);
}

// ---------------------------------------------------------------------------

TEST(Adam, ZeroGradientLeavesParamsAndCountsStep) {
    std::vector<double> p = {1.0, -2.0, 3.0};
    const std::vector<double> g(3, 0.0);
    AdamState s(3, 1e-2);
    adam_step(p, g, s);
    EXPECT_EQ(p, (std::vector<double>{1.0, -2.0, 3.0}));
    EXPECT_EQ(s.t, 1);
}

TEST(Adam, FirstStepMovesByLearningRate) {
    std::vector<double> p = {0.0, 0.0, 0.0, 0.0};
    const std::vector<double> g = {3.0, -0.25, 1e-3, -50.0};
    AdamState s(4, 0.01);
    s.eps = 1e-14;
    adam_step(p, g, s);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(p[i], -0.01 * (g[i] > 0 ? 1 : -1), 1e-10);
}

TEST(Adam, ThreeStepsOnSquareMatchScalarRecurrence) {
    // f(x) = x^2, x0 = 1, hand-simulated recurrences.
    const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    double x = 1.0, m = 0.0, v = 0.0;
    std::vector<double> expected;
    for (int t = 1; t <= 3; ++t) {
        const double g = 2.0 * x;
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        const double mh = m / (1 - std::pow(b1, t));
        const double vh = v / (1 - std::pow(b2, t));
        x = x - lr * mh / (std::sqrt(vh) + eps);
        expected.push_back(x);
    }
    std::vector<double> p = {1.0};
    AdamState s(1, lr);
    for (int t = 0; t < 3; ++t) {
        const std::vector<double> g = {2.0 * p[0]};
        adam_step(p, g, s);
        EXPECT_NEAR(p[0], expected[static_cast<std::size_t>(t)], 1e-15);
    }
}

TEST(Adam, ZeroLearningRateIsIdentity) {
    std::vector<double> p = {0.3, -0.7};
    AdamState s(2, 0.0);
    for (int i = 0; i < 5; ++i) adam_step(p, std::vector<double>{1.5, -2.5}, s);
    EXPECT_EQ(p, (std::vector<double>{0.3, -0.7}));
}

TEST(Adam, RejectsNonFiniteGradientNamingIndex) {
    std::vector<double> p = {0.0, 0.0, 0.0};
    AdamState s(3, 0.1);
    try {
        adam_step(p, std::vector<double>{0.0, 1.0, std::nan("")}, s);
        FAIL() << "expected throw";
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("index 2"), std::string::npos);
    }
    EXPECT_EQ(s.t, 0);
}

// ---------------------------------------------------------------------------

TEST(GradCheck, LinearOnlyModelIsExact) {
    MlpModel model({LayerSpec::linear(5, 4), LayerSpec::linear(4, 3)});
    model.initialize(12);
    LossTargets targets;
    targets.dense = random_matrix(6, 3, 13);
    const GradCheckResult r = grad_check(model, random_matrix(6, 5, 14), LossKind::squared_error, targets, 1e-4);
    EXPECT_LT(r.max_rel_error, 1e-6);
    EXPECT_EQ(r.nonsmooth, 0u);
}

TEST(GradCheck, BatchnormAndLeakyReluAtSmoothPoint) {
    MlpModel model = make_mlp(5, 10, 2, 3);
    model.initialize(15);
    LossTargets targets;
    targets.dense = (random_matrix(8, 3, 16).array() > 0).cast<double>();
    const GradCheckResult r = grad_check(model, random_matrix(8, 5, 17), LossKind::sigmoid_bce, targets);
    EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(GradCheck, KinkIsFlaggedAndExcluded) {
    MlpModel model({LayerSpec::linear(2, 2), LayerSpec::leakyrelu(2), LayerSpec::linear(2, 1)});
    model.initialize(18);
    Matrix x(2, 2);
    x << 0.0, 0.0,  // pre-activation equals the (zero) bias: exactly on the kink
        1.0, -0.5;
    LossTargets targets;
    targets.dense = Matrix::Constant(2, 1, 0.7);
    const GradCheckResult r = grad_check(model, x, LossKind::squared_error, targets, 1e-5);
    EXPECT_GT(r.nonsmooth, 0u);
    EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(GradCheck, RejectsEpsilonOutOfRange) {
    MlpModel model({LayerSpec::linear(2, 1)});
    LossTargets targets;
    targets.dense = Matrix::Zero(1, 1);
    EXPECT_THROW(grad_check(model, Matrix::Zero(1, 2), LossKind::squared_error, targets, 1e-2),
                 std::invalid_argument);
}

// ---------------------------------------------------------------------------

TEST(Model, RejectsInconsistentLayers) {
    EXPECT_THROW(MlpModel({LayerSpec::linear(3, 4), LayerSpec::linear(5, 2)}), std::invalid_argument);
    EXPECT_THROW(MlpModel({{LayerKind::batchnorm1d, 3, 4, 0.01}}), std::invalid_argument);
    EXPECT_THROW(MlpModel({LayerSpec::leakyrelu(3, 1.5)}), std::invalid_argument);
}

TEST(Model, ParamCountIsSumOfLayers) {
    MlpModel model = make_mlp(7, 9, 2, 3);
    std::size_t total = 0;
    for (const auto& l : model.layers()) total += l.param_count();
    EXPECT_EQ(model.params().size(), total);
    EXPECT_EQ(total, static_cast<std::size_t>((7 * 9 + 9) + 2 * 9 + (9 * 9 + 9) + 2 * 9 + (9 * 3 + 3)));
}

TEST(Checkpoint, RoundTripsAndIsByteStable) {
    MlpModel model = make_mlp(4, 6, 2, 2);
    model.initialize(77);
    update_running_stats(model, forward(model, random_matrix(10, 4, 78), Mode::train));
    model.lineage() = "test/77";
    const auto dir = std::filesystem::temp_directory_path() / "leakaudit_nn_test";
    std::filesystem::create_directories(dir);
    save_checkpoint(model, dir / "a.ckpt");
    save_checkpoint(model, dir / "b.ckpt");
    EXPECT_EQ(slurp(dir / "a.ckpt"), slurp(dir / "b.ckpt"));
    const MlpModel back = load_checkpoint(dir / "a.ckpt");
    EXPECT_TRUE(back == model);
    EXPECT_EQ(back.lineage(), "test/77");
    std::filesystem::remove_all(dir);
}

TEST(Backward, BitIdenticalAcrossHeapPlacement) {
    MlpModel model = make_mlp(14, 40, 2, 6);
    model.initialize(3);
    Rng rng(1);
    std::normal_distribution<double> n;
    Matrix x(64, 14);
    for (auto& v : x.reshaped()) v = n(rng);
    const Matrix target = (x.leftCols(6).array() > 0).cast<double>().matrix();
    const ForwardTrace trace = forward(model, x, Mode::train);
    const Matrix grad = sigmoid_bce_with_logits(trace.output(), target).grad;
    const std::vector<double> reference = backward(model, trace, grad).params;
    std::vector<std::vector<double>> spacers;
    for (int k = 1; k < 12; ++k) {
        spacers.emplace_back(static_cast<std::size_t>(k));  // shift the next allocation
        EXPECT_EQ(backward(model, trace, grad).params, reference) << k;
    }
}
