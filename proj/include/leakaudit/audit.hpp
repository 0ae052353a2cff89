#pragma once

// lambda_D, lambda_D(F1), lambda_M and Delta on one held-out audit set.
//
// The audit set is split 50/50 (gender-stratified) into an attacker-train
// source and an attacker-eval source; every estimate uses the same split and
// the same round seeds, so the three numbers differ only in their inputs.

#include "leakaudit/attacker.hpp"
#include "leakaudit/metrics.hpp"
#include "leakaudit/perturb.hpp"

#include "json.hpp"

#include <optional>
#include <string>
#include <vector>

namespace leakaudit {

struct AuditSplit {
    Dataset attacker_train;
    Dataset attacker_eval;
};

AuditSplit make_audit_split(const Dataset& audit, std::uint64_t seed);

LabelSources label_sources(const AuditSplit& split);
/// Throws std::invalid_argument listing ids the predictions do not cover.
AttackSources logit_sources(const AuditSplit& split, const Predictions& predictions);

struct ModelPerformance {
    double f1 = 0.0;        // micro
    double macro_f1 = 0.0;
    double map = 0.0;
    std::vector<int> map_excluded_labels;
};

ModelPerformance score_model(const Predictions& predictions, const Dataset& dataset);

/// lambda_D: attacker on ground-truth binary label vectors.
LeakageEstimate audit_dataset(const AuditSplit& split, AttackerConfig config, std::uint64_t seed);

struct ModelAudit {
    LeakageEstimate lambda_M;
    ModelPerformance performance;
};

/// lambda_M: attacker on the model's pre-activation logits.
ModelAudit audit_model(const AuditSplit& split, const Predictions& predictions, AttackerConfig config,
                       std::uint64_t seed);

struct LeakageReport {
    std::optional<LeakageEstimate> lambda_D;
    std::optional<AdjustedLeakage> lambda_D_at_perf;
    std::optional<LeakageEstimate> lambda_M;
    std::optional<double> delta;
    std::optional<ModelPerformance> performance;
    AttackerConfig attacker;
    std::uint64_t seed = 0;
    std::size_t audit_examples = 0;
    std::vector<std::string> one_gender_labels;
    std::vector<std::string> notes;
};

/// Delta = lambda_M - lambda_D(model F1). Throws std::domain_error when the
/// model F1 is at or below the perturbation floor.
LeakageReport bias_amplification(const LeakageEstimate& lambda_M, const AuditSplit& split, double model_f1,
                                 AttackerConfig config, std::uint64_t seed, double tolerance = 0.01,
                                 F1Kind metric = F1Kind::micro);

struct AuditOptions {
    double tolerance = 0.01;
    bool include_lambda_D = true;
    /// Which F1 of the model the perturbed labels are matched to.
    F1Kind metric = F1Kind::micro;
};

/// Full audit. Without predictions the report holds lambda_D only.
LeakageReport run_audit(const Dataset& audit, const Predictions* predictions, const AttackerConfig& config,
                        std::uint64_t seed, const AuditOptions& options = {});

/// lambda_D(F1) over a grid of targets with the audit's split and seeds.
std::vector<CurvePoint> audit_curve(const AuditSplit& split, std::span<const double> f1_grid, AttackerConfig config,
                                    std::uint64_t seed, double tolerance = 0.01, F1Kind metric = F1Kind::micro);

/// Caveats carried verbatim by every report.
std::vector<std::string> protocol_notes();

/// Throws std::logic_error when the stored delta differs from the difference
/// of the stored means.
void check_consistency(const LeakageReport& report);

inline constexpr int kSchemaVersion = 1;

nlohmann::ordered_json attacker_config_json(const AttackerConfig& config);
nlohmann::ordered_json estimate_json(const LeakageEstimate& estimate);
/// Runs check_consistency first.
nlohmann::ordered_json report_json(const LeakageReport& report);

}  // namespace leakaudit
