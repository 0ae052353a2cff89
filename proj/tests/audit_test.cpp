#include "leakaudit/audit.hpp"
#include "leakaudit/synth.hpp"

#include <gtest/gtest.h>

#include <algorithm>

using namespace leakaudit;

namespace {

Dataset audit_set() {
    SynthConfig c;
    c.n_examples = 2400;
    c.n_labels = 5;
    c.signal_dims = 5;
    c.label_gender_ratio = {3.0, 0.5, 1.0, 2.0, 0.4};
    c.seed = 12;
    return generate(c);
}

AttackerConfig cheap() {
    AttackerConfig a;
    a.epochs = 12;
    a.hidden_dim = 32;
    a.rounds = 3;
    return a;
}

Predictions encode_labels(const Matrix& labels01, const Dataset& d, double magnitude) {
    return make_predictions(d, (2.0 * labels01.array() - 1.0).matrix() * magnitude);
}

}  // namespace

TEST(Audit, SplitIsStratifiedHalves) {
    const Dataset d = audit_set();
    const auto s = make_audit_split(d, 1);
    EXPECT_EQ(s.attacker_train.size() + s.attacker_eval.size(), d.size());
    const auto a = s.attacker_train.gender_counts(), b = s.attacker_eval.gender_counts();
    const auto all = d.gender_counts();
    EXPECT_EQ(a[0], all[0] / 2);
    EXPECT_EQ(a[1], all[1] / 2);
    EXPECT_EQ(b[0] + a[0], all[0]);
}

TEST(Audit, LabelOnlyReportHasLambdaDOnly) {
    const Dataset d = audit_set();
    const auto r = run_audit(d, nullptr, cheap(), 3);
    ASSERT_TRUE(r.lambda_D.has_value());
    EXPECT_FALSE(r.lambda_M.has_value());
    EXPECT_FALSE(r.delta.has_value());
    EXPECT_EQ(r.lambda_D->config.input_kind, InputKind::binary_labels);
    const auto j = report_json(r);
    EXPECT_EQ(j["schema_version"], 1);
    EXPECT_TRUE(j["delta"].is_null());
    EXPECT_EQ(j["notes"].size(), 3u);
}

TEST(Audit, SaturatedLogitsOfGroundTruth) {
    const Dataset d = audit_set();
    const Predictions p = encode_labels(label_matrix(d), d, 30.0);
    AttackerConfig a = cheap();
    a.epochs = 40;  // raw and z-scored inputs converge to the same attacker given time
    const auto r = run_audit(d, &p, a, 4);
    ASSERT_TRUE(r.delta.has_value());
    EXPECT_DOUBLE_EQ(r.performance->f1, 1.0);
    EXPECT_DOUBLE_EQ(r.performance->map, 1.0);
    EXPECT_EQ(r.lambda_M->config.input_kind, InputKind::logits);
    EXPECT_EQ(r.lambda_D_at_perf->leakage.config.input_kind, InputKind::binary_labels);
    // logits carry exactly the label information; z-scoring maps them onto the labels
    EXPECT_NEAR(r.lambda_M->mean, r.lambda_D->mean, 1.0);
    EXPECT_EQ(r.lambda_D_at_perf->leakage.per_round, r.lambda_D->per_round);
    EXPECT_DOUBLE_EQ(*r.delta, r.lambda_M->mean - r.lambda_D_at_perf->leakage.mean);
}

TEST(Audit, ChanceOnlyPseudoModelHasSmallDelta) {
    const Dataset d = audit_set();
    const auto pert = perturb_to_f1(d, 0.8, 0.01, 9);
    const Predictions p = encode_labels(pert.labels, d, 2.0);
    AttackerConfig a = cheap();
    a.rounds = 6;
    a.epochs = 40;
    // short training favours the z-scored logits; 40 epochs closes that gap
    const auto r = run_audit(d, &p, a, 5);
    EXPECT_NEAR(r.performance->f1, 0.8, 0.01);
    EXPECT_NEAR(*r.delta, 0.0, 3.0);
}

TEST(Audit, CoverageGapsListed) {
    const Dataset d = audit_set();
    Predictions p = encode_labels(label_matrix(d), d, 1.0);
    p.ids.resize(100);
    p.logits.conservativeResize(100, Eigen::NoChange);
    try {
        run_audit(d, &p, cheap(), 1);
        FAIL();
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("missing"), std::string::npos);
    }
}

TEST(Audit, DeltaZeroWhenEqual) {
    LeakageReport r;
    r.lambda_M = LeakageEstimate::from_rounds({60.0, 62.0});
    r.lambda_D_at_perf = AdjustedLeakage{};
    r.lambda_D_at_perf->leakage = LeakageEstimate::from_rounds({61.0, 61.0});
    r.delta = r.lambda_M->mean - r.lambda_D_at_perf->leakage.mean;
    EXPECT_EQ(*r.delta, 0.0);
    EXPECT_NO_THROW(report_json(r));
    r.delta = 0.5;
    EXPECT_THROW(report_json(r), std::logic_error);
}

TEST(Audit, ReportsAreByteDeterministic) {
    const Dataset d = audit_set();
    const auto a = report_json(run_audit(d, nullptr, cheap(), 8)).dump();
    const auto b = report_json(run_audit(d, nullptr, cheap(), 8)).dump();
    EXPECT_EQ(a, b);
}

TEST(Audit, BelowFloorRejected) {
    const Dataset d = audit_set();
    const auto split = make_audit_split(d, 1);
    const LeakageEstimate lm = LeakageEstimate::from_rounds({55.0});
    EXPECT_THROW(bias_amplification(lm, split, 0.05, cheap(), 1), std::domain_error);
}

TEST(Audit, OneGenderLabelsReported) {
    Dataset d = audit_set();
    for (auto& e : d.examples)
        if (e.gender == Gender::W) e.labels.erase(std::remove(e.labels.begin(), e.labels.end(), 4), e.labels.end());
    d.examples.erase(std::remove_if(d.examples.begin(), d.examples.end(), [](const Example& e) { return e.labels.empty(); }),
                     d.examples.end());
    AttackerConfig a = cheap();
    a.rounds = 1;
    const auto r = run_audit(d, nullptr, a, 2);
    EXPECT_EQ(r.one_gender_labels, std::vector<std::string>{"label_04"});
}
