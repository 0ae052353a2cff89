#include "leakaudit/synth.hpp"

#include <gtest/gtest.h>

#include <boost/math/distributions/beta.hpp>

#include <cmath>

using namespace leakaudit;

namespace {

SynthConfig small_config() {
    SynthConfig c;
    c.n_examples = 2000;
    c.n_labels = 6;
    c.signal_dims = 8;
    c.proxy_dims = 4;
    c.noise_sigma = 0.3;
    c.seed = 17;
    return c;
}

// Clopper-Pearson interval for a binomial proportion.
std::pair<double, double> exact_interval(long k, long n, double conf) {
    const double a = (1.0 - conf) / 2.0;
    const double lo = k == 0 ? 0.0 : boost::math::ibeta_inv(static_cast<double>(k), static_cast<double>(n - k + 1), a);
    const double hi = k == n ? 1.0 : boost::math::ibeta_inv(static_cast<double>(k + 1), static_cast<double>(n - k), 1.0 - a);
    return {lo, hi};
}

// Brute-force label-configuration enumeration, independent of the library's
// bit tricks: P(Y) from prevalences, P(M|Y) from the fitted model.
struct Enumeration {
    double bayes = 0.0;
    std::vector<double> ratio;
};

Enumeration enumerate(const SynthConfig& c) {
    const SynthModel m = build_synth_model(c);
    const int L = c.n_labels;
    std::vector<std::vector<int>> sets;
    std::vector<double> p;
    double total = 0.0;
    for (int mask = 1; mask < (1 << L); ++mask) {
        std::vector<int> s;
        double q = 1.0;
        for (int k = 0; k < L; ++k) {
            const bool on = (mask & (1 << k)) != 0;
            if (on) s.push_back(k);
            q *= on ? m.prevalence[k] : 1.0 - m.prevalence[k];
        }
        sets.push_back(s);
        p.push_back(q);
        total += q;
    }
    double pm = 0.0;
    std::vector<double> num(L, 0.0), den(L, 0.0);
    for (std::size_t i = 0; i < sets.size(); ++i) {
        p[i] /= total;
        const double q = m.p_male_given(sets[i]);
        pm += p[i] * q;
        for (int k : sets[i]) {
            num[k] += p[i] * q;
            den[k] += p[i] * (1.0 - q);
        }
    }
    Enumeration e;
    for (std::size_t i = 0; i < sets.size(); ++i) {
        const double q = m.p_male_given(sets[i]);
        e.bayes += std::max(0.5 * p[i] * q / pm, 0.5 * p[i] * (1.0 - q) / (1.0 - pm));
    }
    for (int k = 0; k < L; ++k) e.ratio.push_back(num[k] / den[k]);
    return e;
}

}  // namespace

TEST(Generate, BitDeterministic) {
    const auto a = generate(small_config());
    const auto b = generate(small_config());
    EXPECT_EQ(a.examples, b.examples);
    auto c = small_config();
    c.seed = 18;
    EXPECT_NE(generate(c).examples, a.examples);
}

TEST(Generate, ShapeAndSchema) {
    const auto d = generate(small_config());
    EXPECT_EQ(d.size(), 2000u);
    EXPECT_EQ(d.schema.feature_width, 12);
    EXPECT_EQ(d.schema.label_count(), 6);
    EXPECT_NO_THROW(validate(d));
    for (const auto& e : d.examples) EXPECT_FALSE(e.labels.empty());
}

TEST(Generate, IndependentCaseNearOne) {
    auto c = small_config();
    c.n_examples = 20000;
    const auto t = cooccurrence(generate(c));
    for (std::size_t k = 0; k < t.label_count(); ++k) {
        const long n = t.count_m[k] + t.count_w[k];
        const auto [lo, hi] = exact_interval(t.count_m[k], n, 0.999);
        EXPECT_LE(lo, 0.5);
        EXPECT_GE(hi, 0.5);
    }
    const auto bayes = bayes_gender_accuracy(c, 500);
    EXPECT_NEAR(bayes.from_labels, 0.5, 1e-12);
    EXPECT_NEAR(bayes.from_features, 0.5, 1e-12);
}

TEST(Generate, RatioTwoWithinBinomialInterval) {
    auto c = small_config();
    c.n_examples = 20000;
    c.label_gender_ratio.assign(6, 2.0);
    const auto t = cooccurrence(generate(c));
    for (std::size_t k = 0; k < t.label_count(); ++k) {
        const long n = t.count_m[k] + t.count_w[k];
        const auto [lo, hi] = exact_interval(t.count_m[k], n, 0.999);
        EXPECT_LE(lo, 2.0 / 3.0) << k;
        EXPECT_GE(hi, 2.0 / 3.0) << k;
    }
}

TEST(Generate, RatiosConvergeAtLargeN) {
    SynthConfig c;
    c.n_examples = 100000;
    c.n_labels = 5;
    c.signal_dims = 5;
    c.label_gender_ratio = {3.0, 0.5, 1.0, 1.5, 0.25};
    c.seed = 4;
    const auto t = cooccurrence(generate(c));
    for (std::size_t k = 0; k < 5; ++k) {
        const double q = c.label_gender_ratio[k] / (1.0 + c.label_gender_ratio[k]);
        const double n = static_cast<double>(t.count_m[k] + t.count_w[k]);
        const double sd = std::sqrt(n * q * (1.0 - q));
        EXPECT_LE(std::abs(t.count_m[k] - n * q), 3.0 * sd) << k;
    }
}

TEST(Generate, FittedRatiosMatchEnumeration) {
    SynthConfig c = small_config();
    c.label_gender_ratio = {3.0, 1.0 / 3.0, 2.0, 0.5, 1.5, 0.8};
    const auto e = enumerate(c);
    for (int k = 0; k < 6; ++k) EXPECT_NEAR(e.ratio[k], c.label_gender_ratio[k], 1e-9);
}

TEST(Generate, UnachievableRatioRejected) {
    SynthConfig c = small_config();
    c.n_examples = 20;
    c.label_gender_ratio.assign(6, 200.0);
    EXPECT_THROW(generate(c), std::invalid_argument);
}

TEST(Generate, JointlyInfeasibleRatiosRejected) {
    SynthConfig c = small_config();
    c.n_labels = 10;
    c.signal_dims = 10;
    for (int k = 0; k < 10; ++k) c.label_gender_ratio.push_back(k % 2 ? 1.0 / 3.0 : 3.0);
    try {
        generate(c);
        FAIL();
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("residual"), std::string::npos);
    }
}

TEST(Generate, ConfigValidation) {
    SynthConfig c = small_config();
    c.proxy_strength = 1.5;
    EXPECT_THROW(validate(c), std::invalid_argument);
    c = small_config();
    c.label_gender_ratio = {1.0, -1.0, 1.0, 1.0, 1.0, 1.0};
    EXPECT_THROW(validate(c), std::invalid_argument);
    c = small_config();
    c.signal_dims = 3;
    EXPECT_THROW(validate(c), std::invalid_argument);
}

TEST(Generate, ConfigJsonRoundTrip) {
    SynthConfig c = small_config();
    c.label_gender_ratio = {1.0, 2.0, 3.0, 0.5, 1.0, 1.0};
    c.proxy_label_coupling = 0.3;
    EXPECT_EQ(synth_config_from_json(synth_config_to_json(c)), c);
}

TEST(Bayes, ProxyStrengthOneIsPerfect) {
    SynthConfig c = small_config();
    c.proxy_strength = 1.0;
    EXPECT_EQ(bayes_gender_accuracy(c, 10).from_features, 1.0);
    // and the data agree: the proxy sign determines gender
    const auto d = generate(c);
    for (const auto& e : d.examples) EXPECT_EQ((*e.features)[8] > 0.0, e.gender == Gender::M);
}

TEST(Bayes, TwoCellPosterior) {
    SynthConfig c;
    c.task_kind = TaskKind::multi_class;
    c.n_labels = 2;
    c.signal_dims = 2;
    c.label_gender_ratio = {3.0, 1.0 / 3.0};
    EXPECT_NEAR(bayes_label_accuracy(c), 0.75, 1e-12);
}

TEST(Bayes, EightLabelEnumeration) {
    SynthConfig c;
    c.n_labels = 8;
    c.signal_dims = 8;
    c.label_gender_ratio = {3.0, 1.0 / 3.0, 2.0, 0.5, 1.5, 1.0 / 1.5, 2.5, 0.4};
    c.seed = 3;
    const double got = bayes_label_accuracy(c);
    EXPECT_NEAR(got, enumerate(c).bayes, 1e-12);
    EXPECT_GT(got, 0.6);
}

TEST(Bayes, NoiselessSignalMatchesLabels) {
    SynthConfig c = small_config();
    c.noise_sigma = 0.0;
    c.label_gender_ratio = {3.0, 1.0 / 3.0, 2.0, 0.5, 1.5, 0.8};
    const auto b = bayes_gender_accuracy(c, 200);
    // with exact labels recoverable, per-sample posteriors are the label posteriors
    EXPECT_NEAR(b.from_features, b.from_labels, 0.03);
}

TEST(Bayes, NoisyFeaturesNeverBeatLabelsWithoutProxy) {
    SynthConfig c = small_config();
    c.noise_sigma = 1.0;
    c.label_gender_ratio = {3.0, 1.0 / 3.0, 2.0, 0.5, 1.5, 0.8};
    const auto b = bayes_gender_accuracy(c, 2000);
    EXPECT_LT(b.from_features, b.from_labels + 0.01);
    EXPECT_GT(b.from_features, 0.5);
}

TEST(Bayes, MultiClassQuadrature) {
    SynthConfig c;
    c.task_kind = TaskKind::multi_class;
    c.n_labels = 3;
    c.signal_dims = 4;
    c.label_gender_ratio = {4.0, 1.0, 0.25};
    c.noise_sigma = 1e-3;
    const auto b = bayes_gender_accuracy(c, 1000);
    EXPECT_NEAR(b.from_features, b.from_labels, 0.03);
}

TEST(Bayes, ProxyRaisesFeatureAccuracy) {
    SynthConfig c = small_config();
    c.proxy_strength = 0.5;
    const auto b = bayes_gender_accuracy(c, 2000);
    // each proxy dim alone separates the genders by 2 standard deviations
    const double one_dim = 0.5 * std::erfc(-1.0 / std::sqrt(2.0));
    EXPECT_GT(b.from_features, one_dim);
    EXPECT_LE(b.from_features, 1.0);
}

TEST(Bayes, NearlySeparableStaysInUnitInterval) {
    SynthConfig c;
    c.n_labels = 6;
    c.signal_dims = 8;
    c.proxy_dims = 4;
    c.label_gender_ratio = {2, 0.5, 1, 1, 3, 1};
    c.proxy_strength = 0.8;
    c.proxy_label_coupling = 0.5;
    c.noise_sigma = 0.5;
    c.seed = 4;
    const auto b = bayes_gender_accuracy(c, 4000);
    EXPECT_LE(b.from_features, 1.0);
    EXPECT_GT(b.from_features, 0.99);
}
