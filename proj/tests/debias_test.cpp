#include "leakaudit/audit.hpp"
#include "leakaudit/debias.hpp"
#include "leakaudit/synth.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace leakaudit;

namespace {

SynthConfig proxy_config(int n = 3000) {
    SynthConfig c;
    c.n_examples = n;
    c.n_labels = 6;
    c.signal_dims = 8;
    c.proxy_dims = 6;
    c.label_gender_ratio.assign(6, 1.0);
    c.proxy_strength = 0.8;
    c.proxy_label_coupling = 0.5;
    c.noise_sigma = 0.5;
    c.seed = 21;
    return c;
}

DatasetSplit parts(const SynthConfig& c) { return split(generate(c), {0.5, 0.2, 0.3}, 4); }

TrainConfig quick_train() {
    TrainConfig t;
    t.hidden_dim = 32;
    t.max_epochs = 30;
    return t;
}

AttackerConfig cheap_attacker() {
    AttackerConfig a;
    a.hidden_dim = 64;
    a.epochs = 40;
    a.lr = 1e-3;
    a.rounds = 2;
    return a;
}

double f1_of(const MlpModel& m, const Dataset& d) { return f1(predict(m, feature_matrix(d)), d); }

}  // namespace

TEST(Debias, TapMapping) {
    EXPECT_EQ(tap_activation_index(Tap::embedding, 2), 6u);
    EXPECT_EQ(tap_activation_index(Tap::hidden, 2), 3u);
    EXPECT_EQ(tap_activation_index(Tap::hidden, 4), 6u);
    EXPECT_THROW(tap_activation_index(Tap::embedding, 0), std::invalid_argument);
    EXPECT_EQ(tap_from_string("hidden"), Tap::hidden);
    EXPECT_THROW(tap_from_string("conv5"), std::invalid_argument);
}

TEST(Debias, ConfigValidation) {
    DebiasConfig c;
    EXPECT_NO_THROW(validate(c));
    c.beta_recon = 1.0;
    EXPECT_THROW(validate(c), std::invalid_argument);
    c.tap = Tap::input_mask;
    EXPECT_NO_THROW(validate(c));
    c.lambda_adv = -1.0;
    EXPECT_THROW(validate(c), std::invalid_argument);
}

TEST(Baseline, LinearlySeparableTask) {
    SynthConfig c;
    c.n_examples = 4000;
    c.n_labels = 4;
    c.signal_dims = 6;
    c.seed = 2;
    const SynthModel model = build_synth_model(c);
    const Dataset d = generate(c);
    // the generating rule is linear in the features: it reproduces every label
    const Matrix x = feature_matrix(d);
    Matrix rule(x.rows(), c.n_labels);
    for (int k = 0; k < c.n_labels; ++k)
        rule.col(k) = (x * model.directions.row(k).transpose()).array() - model.thresholds[static_cast<std::size_t>(k)];
    ASSERT_EQ(f1(rule, d), 1.0);

    const auto s = split(d, {0.6, 0.2, 0.2}, 1);
    const auto b = train_baseline(s.train, s.dev, quick_train(), 3);
    EXPECT_GT(f1_of(b.model, s.test), 0.95);
    EXPECT_LE(b.epochs_run, 30);
    EXPECT_EQ(b.dev_f1.size(), static_cast<std::size_t>(b.epochs_run));
}

TEST(Baseline, Deterministic) {
    const auto s = parts(proxy_config(1200));
    TrainConfig t = quick_train();
    t.max_epochs = 5;
    const auto a = train_baseline(s.train, s.dev, t, 9);
    const auto b = train_baseline(s.train, s.dev, t, 9);
    const auto c = train_baseline(s.train, s.dev, t, 10);
    EXPECT_TRUE(a.model == b.model);
    EXPECT_FALSE(a.model == c.model);
}

TEST(Baseline, DivergenceRejected) {
    auto s = parts(proxy_config(600));
    for (auto& e : s.train.examples) (*e.features)[0] = std::nan("");
    try {
        train_baseline(s.train, s.dev, quick_train(), 1);
        FAIL();
    } catch (const DebiasError& e) {
        EXPECT_NE(std::string(e.what()).find("step"), std::string::npos);
    }
}

TEST(AdversarialStep, CriticFrozenAndLossDecomposes) {
    MlpModel pred = make_mlp(6, 16, 2, 3);
    pred.initialize(1);
    MlpModel critic = make_mlp(16, 8, 2, 2);
    critic.initialize(2);
    // non-trivial running stats so eval mode differs from train mode
    critic.running_mean()[1].setConstant(0.3);
    critic.running_var()[1].setConstant(2.0);
    Rng rng(3);
    std::normal_distribution<double> n;
    Matrix x(16, 6);
    for (auto& v : x.reshaped()) v = n(rng);
    LossTargets t;
    t.dense = (x.leftCols(3).array() > 0).cast<double>().matrix();
    std::vector<int> g;
    for (int i = 0; i < 16; ++i) g.push_back(i % 2);

    const MlpModel critic_before = critic;
    const MlpModel pred_before = pred;
    const std::size_t tap = tap_activation_index(Tap::embedding, 2);
    AdamState adam(pred.params().size(), 1e-3);
    const auto loss = adversarial_step(pred, adam, critic, tap, x, LossKind::sigmoid_bce, t, g, 0.7);
    EXPECT_TRUE(critic == critic_before);
    EXPECT_FALSE(pred == pred_before);

    const ForwardTrace tr = forward(pred_before, x, Mode::train);
    const double task = sigmoid_bce_with_logits(tr.output(), t.dense).value;
    const double adv = softmax_cross_entropy(predict(critic_before, tr.activations[tap]), g).value;
    EXPECT_NEAR(loss.task, task, 1e-10);
    EXPECT_NEAR(loss.adv, adv, 1e-10);
    EXPECT_NEAR(loss.total, task - 0.7 * adv, 1e-10);

    // lambda = 0 is a plain task step
    MlpModel a = pred_before, b = pred_before;
    AdamState sa(a.params().size(), 1e-3), sb(b.params().size(), 1e-3);
    adversarial_step(a, sa, critic, tap, x, LossKind::sigmoid_bce, t, g, 0.0);
    train_step(b, sb, x, LossKind::sigmoid_bce, t);
    EXPECT_TRUE(a == b);
}

TEST(AdvTrain, LambdaZeroIsTaskTraining) {
    const auto s = parts(proxy_config(2000));
    const auto base = train_baseline(s.train, s.dev, quick_train(), 5);
    DebiasConfig c;
    c.lambda_adv = 0.0;
    c.adv_epochs = 4;
    c.critic_warmup_epochs = 1;
    c.predictor = quick_train();
    c.seed = 5;
    const auto r1 = adv_train(s.train, s.dev, c, &base);
    c.critic_steps = 0;
    const auto r0 = adv_train(s.train, s.dev, c, &base);
    EXPECT_TRUE(r0.predictor == r1.predictor);
    EXPECT_NEAR(f1_of(r1.predictor, s.test), f1_of(base.model, s.test), 0.005);
    EXPECT_EQ(r1.trace.size(), 5u);
    EXPECT_EQ(r1.trace.front().phase, "warmup");
    EXPECT_EQ(r1.trace.back().phase, "adversarial");
    EXPECT_EQ(r1.selected_epoch, 4);
    // baseline is trained internally with the same seed when not given
    EXPECT_TRUE(adv_train(s.train, s.dev, c).predictor == r0.predictor);
}

TEST(AdvTrain, WeakCriticAborts) {
    SynthConfig cfg = proxy_config(1500);
    cfg.proxy_dims = 0;
    const auto s = parts(cfg);
    DebiasConfig c;
    c.adv_epochs = 1;
    c.critic_warmup_epochs = 2;
    c.predictor = quick_train();
    c.predictor.max_epochs = 3;
    c.reference_leakage = 80.0;
    try {
        adv_train(s.train, s.dev, c);
        FAIL();
    } catch (const DebiasError& e) {
        EXPECT_NE(std::string(e.what()).find("too weak"), std::string::npos);
    }
    c.reference_leakage = 52.0;
    EXPECT_NO_THROW(adv_train(s.train, s.dev, c));
}

TEST(AdvTrain, RemovesGenderFromEmbedding) {
    const auto s = parts(proxy_config(3000));
    DebiasConfig c;
    c.predictor = quick_train();
    c.adv_epochs = 40;
    c.seed = 3;
    const auto r = adv_train(s.train, s.dev, c);
    const AuditSplit audit = make_audit_split(s.test, 1);
    auto embedding_leakage = [&](const MlpModel& m) {
        AttackSources src;
        src.train_inputs = representations(m, feature_matrix(audit.attacker_train), r.tap_index);
        src.train_genders = genders_of(audit.attacker_train);
        src.eval_inputs = representations(m, feature_matrix(audit.attacker_eval), r.tap_index);
        src.eval_genders = genders_of(audit.attacker_eval);
        AttackerConfig a = cheap_attacker();
        a.input_kind = InputKind::logits;
        return estimate_leakage(src, a, 2).mean;
    };
    const double before = embedding_leakage(r.baseline.model);
    const double after = embedding_leakage(r.predictor);
    EXPECT_GT(before, 70.0);
    EXPECT_LT(after, 55.0);
    EXPECT_GT(r.warmup_critic_accuracy, 90.0);
    EXPECT_LT(r.trace.back().critic_dev_accuracy, r.warmup_critic_accuracy - 20.0);
    EXPECT_GT(f1_of(r.predictor, s.test), f1_of(r.baseline.model, s.test) - 0.03);
}

TEST(Masked, ReconstructionDominatesWithoutAdversary) {
    const auto s = parts(proxy_config(1500));
    DebiasConfig c;
    c.tap = Tap::input_mask;
    c.lambda_adv = 0.0;
    c.beta_recon = 5.0;
    c.predictor = quick_train();
    c.predictor.max_epochs = 15;
    c.adv_epochs = 2;
    c.critic_warmup_epochs = 1;
    const auto r = adv_train_masked(s.train, s.dev, c);
    ASSERT_EQ(r.mean_mask.size(), 14u);
    for (double m : r.mean_mask) {
        EXPECT_GT(m, 0.9);
        EXPECT_LT(m, 1.0);
    }
}

TEST(Masked, GateAloneKeepsTaskAccuracy) {
    const auto s = parts(proxy_config(2000));
    const auto base = train_baseline(s.train, s.dev, quick_train(), 4);
    DebiasConfig c;
    c.tap = Tap::input_mask;
    c.lambda_adv = 0.0;
    c.beta_recon = 0.0;
    c.predictor = quick_train();
    c.adv_epochs = 2;
    c.critic_warmup_epochs = 0;
    c.seed = 4;
    const auto r = adv_train_masked(s.train, s.dev, c);
    EXPECT_NEAR(f1(predict_dataset(r, s.test), s.test), f1_of(base.model, s.test), 0.02);
}

TEST(Masked, AdversarySuppressesProxyDims) {
    const auto s = parts(proxy_config(3000));
    DebiasConfig c;
    c.tap = Tap::input_mask;
    c.lambda_adv = 5.0;
    c.beta_recon = 0.05;
    c.predictor = quick_train();
    c.adv_epochs = 15;
    c.seed = 6;
    const auto r = adv_train_masked(s.train, s.dev, c);
    double signal = 0.0, proxy = 0.0;
    for (int j = 0; j < 8; ++j) signal += r.mean_mask[static_cast<std::size_t>(j)] / 8.0;
    for (int j = 8; j < 14; ++j) proxy += r.mean_mask[static_cast<std::size_t>(j)] / 6.0;
    EXPECT_LT(proxy, signal - 0.3);
    EXPECT_GT(signal, 0.5);
    EXPECT_LT(r.trace.back().critic_dev_accuracy, r.warmup_critic_accuracy - 20.0);
}

TEST(NoiseSweep, EndpointsAndMonotonicity) {
    const auto s = parts(proxy_config(4000));
    const auto base = train_baseline(s.train, s.dev, quick_train(), 2);
    const std::vector<double> sigmas = {0.0, 0.5, 1.0, 2.0, 10.0, 100.0};
    AttackerConfig a = cheap_attacker();
    a.rounds = 4;
    const auto pts = noise_sweep(base.model, s.test, sigmas, a, 8);
    ASSERT_EQ(pts.size(), 6u);

    const Predictions p = predict_dataset(base.model, s.test);
    const auto report = run_audit(s.test, &p, a, 8, {0.01, false});
    EXPECT_EQ(pts[0].lambda_M.per_round, report.lambda_M->per_round);
    EXPECT_DOUBLE_EQ(pts[0].f1, report.performance->f1);

    EXPECT_NEAR(pts[4].lambda_M.mean, 50.0, 3.0);
    EXPECT_NEAR(pts[5].lambda_M.mean, 50.0, 3.0);
    for (std::size_t k = 1; k < pts.size(); ++k) {
        EXPECT_LE(pts[k].f1, pts[k - 1].f1 + 0.015);
        EXPECT_LE(pts[k].lambda_M.mean, pts[k - 1].lambda_M.mean + 1.5);
    }

    // independence floor: predictions unrelated to the labels, at the rate the
    // noisy model predicts positives. sigma = 10 still leaves a little signal.
    const Matrix gold = label_matrix(s.test);
    MlpModel head({base.model.layers().back()});
    std::copy(base.model.params().begin() + static_cast<std::ptrdiff_t>(base.model.param_offset(base.model.layer_count() - 1)),
              base.model.params().end(), head.params().begin());
    const Matrix emb = representations(base.model, feature_matrix(s.test), base.model.layer_count() - 1);
    const Eigen::RowVectorXd mu = emb.colwise().mean();
    const Eigen::RowVectorXd sd = ((emb.rowwise() - mu).array().square().colwise().mean()).sqrt().matrix();
    auto floor_at = [&](double sigma) {
        Matrix noisy = emb;
        Rng rng(77);
        std::normal_distribution<double> n;
        for (Eigen::Index i = 0; i < noisy.rows(); ++i)
            for (Eigen::Index j = 0; j < noisy.cols(); ++j) noisy(i, j) += sigma * sd(j) * n(rng);
        const Matrix pred = (predict(head, noisy).array() > 0.0).cast<double>().matrix();
        double tp = 0.0;
        for (Eigen::Index k = 0; k < gold.cols(); ++k) tp += gold.col(k).sum() * pred.col(k).sum() / static_cast<double>(gold.rows());
        return 2.0 * tp / (gold.sum() + pred.sum());
    };
    EXPECT_NEAR(pts[5].f1, floor_at(100.0), 0.02);
    EXPECT_NEAR(pts[4].f1, floor_at(10.0), 0.08);
    EXPECT_THROW(noise_sweep(base.model, s.test, std::vector<double>{1.0, 0.5}, a, 1), std::invalid_argument);
}

TEST(FeatureAblation, ZeroNoiseAndEmpty) {
    const Dataset d = generate(proxy_config(2000));
    const std::vector<int> dims = {8, 9, 10, 11, 12, 13};
    const Dataset z = feature_ablation(d, dims, AblationMode::zero, 1);
    const Matrix x = feature_matrix(d), xz = feature_matrix(z);
    EXPECT_TRUE(xz.rightCols(6).isZero(0.0));
    EXPECT_EQ(xz.leftCols(8), x.leftCols(8));
    EXPECT_EQ(label_matrix(z), label_matrix(d));

    const Matrix xn = feature_matrix(feature_ablation(d, dims, AblationMode::noise, 1));
    EXPECT_EQ(xn.leftCols(8), x.leftCols(8));
    for (int j : dims) {
        const auto sd = [](const Eigen::VectorXd& v) { return std::sqrt((v.array() - v.mean()).square().mean()); };
        EXPECT_NEAR(xn.col(j).mean(), x.col(j).mean(), 0.1);
        EXPECT_NEAR(sd(xn.col(j)) / sd(x.col(j)), 1.0, 0.1);
    }
    EXPECT_EQ(feature_ablation(d, {}, AblationMode::zero, 1).examples, d.examples);
    EXPECT_THROW(feature_ablation(d, std::vector<int>{14}, AblationMode::zero, 1), std::invalid_argument);
}
