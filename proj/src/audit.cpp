#include "leakaudit/audit.hpp"

#include <cmath>
#include <stdexcept>

namespace leakaudit {

namespace {

std::uint64_t attacker_seed(std::uint64_t seed) { return derive_seed(seed, "audit/attacker"); }

}  // namespace

AuditSplit make_audit_split(const Dataset& audit, std::uint64_t seed) {
    std::array<std::vector<std::size_t>, kGenderCount> by;
    for (std::size_t i = 0; i < audit.size(); ++i) by[static_cast<std::size_t>(index_of(audit.examples[i].gender))].push_back(i);
    Rng rng(derive_seed(seed, "audit/split"));
    std::vector<std::size_t> first, second;
    for (auto& g : by) {
        if (g.size() < 2) throw std::invalid_argument("audit set needs at least 2 examples of each gender");
        std::shuffle(g.begin(), g.end(), rng);
        const std::size_t half = g.size() / 2;
        first.insert(first.end(), g.begin(), g.begin() + static_cast<std::ptrdiff_t>(half));
        second.insert(second.end(), g.begin() + static_cast<std::ptrdiff_t>(half), g.end());
    }
    std::sort(first.begin(), first.end());
    std::sort(second.begin(), second.end());
    return {subset(audit, first), subset(audit, second)};
}

LabelSources label_sources(const AuditSplit& s) {
    LabelSources out;
    out.task_kind = s.attacker_train.schema.task_kind;
    out.train_labels = label_matrix(s.attacker_train);
    out.train_genders = genders_of(s.attacker_train);
    out.eval_labels = label_matrix(s.attacker_eval);
    out.eval_genders = genders_of(s.attacker_eval);
    return out;
}

AttackSources logit_sources(const AuditSplit& s, const Predictions& predictions) {
    AttackSources out;
    out.train_inputs = align_logits(predictions, s.attacker_train);
    out.train_genders = genders_of(s.attacker_train);
    out.eval_inputs = align_logits(predictions, s.attacker_eval);
    out.eval_genders = genders_of(s.attacker_eval);
    return out;
}

ModelPerformance score_model(const Predictions& predictions, const Dataset& dataset) {
    const Matrix logits = align_logits(predictions, dataset);
    const Matrix gold = label_matrix(dataset);
    const Matrix pred = threshold(logits, dataset.schema.task_kind);
    ModelPerformance p;
    p.f1 = micro_f1(pred, gold);
    p.macro_f1 = macro_f1(pred, gold);
    const MapResult m = mean_ap(logits, gold);
    p.map = m.value;
    p.map_excluded_labels = m.excluded_labels;
    return p;
}

LeakageEstimate audit_dataset(const AuditSplit& split, AttackerConfig config, std::uint64_t seed) {
    config.input_kind = InputKind::binary_labels;
    return estimate_leakage(label_sources(split).as_attack_sources(), config, attacker_seed(seed));
}

ModelAudit audit_model(const AuditSplit& split, const Predictions& predictions, AttackerConfig config,
                       std::uint64_t seed) {
    config.input_kind = InputKind::logits;
    ModelAudit out;
    out.lambda_M = estimate_leakage(logit_sources(split, predictions), config, attacker_seed(seed));
    out.performance = score_model(predictions, concatenate(split.attacker_train, split.attacker_eval));
    return out;
}

LeakageReport bias_amplification(const LeakageEstimate& lambda_M, const AuditSplit& split, double model_f1,
                                 AttackerConfig config, std::uint64_t seed, double tolerance, F1Kind metric) {
    config.input_kind = InputKind::binary_labels;
    LeakageReport r;
    r.attacker = config;
    r.seed = seed;
    r.audit_examples = split.attacker_train.size() + split.attacker_eval.size();
    r.lambda_M = lambda_M;
    r.lambda_D_at_perf = leakage_at_f1(label_sources(split), model_f1, config, attacker_seed(seed), tolerance, metric);
    r.delta = lambda_M.mean - r.lambda_D_at_perf->leakage.mean;
    r.notes = protocol_notes();
    return r;
}

LeakageReport run_audit(const Dataset& audit, const Predictions* predictions, const AttackerConfig& config,
                        std::uint64_t seed, const AuditOptions& options) {
    validate(audit);
    const AuditSplit split = make_audit_split(audit, seed);
    LeakageReport r;
    if (predictions) {
        const ModelAudit m = audit_model(split, *predictions, config, seed);
        const double target = options.metric == F1Kind::micro ? m.performance.f1 : m.performance.macro_f1;
        r = bias_amplification(m.lambda_M, split, target, config, seed, options.tolerance, options.metric);
        r.performance = m.performance;
    }
    if (options.include_lambda_D) r.lambda_D = audit_dataset(split, config, seed);
    r.attacker = config;
    r.attacker.input_kind = InputKind::binary_labels;
    r.seed = seed;
    r.audit_examples = audit.size();
    for (int l : one_gender_labels(audit)) r.one_gender_labels.push_back(audit.schema.labels[static_cast<std::size_t>(l)]);
    r.notes = protocol_notes();
    return r;
}

std::vector<CurvePoint> audit_curve(const AuditSplit& split, std::span<const double> grid, AttackerConfig config,
                                    std::uint64_t seed, double tolerance, F1Kind metric) {
    config.input_kind = InputKind::binary_labels;
    return leakage_vs_f1_curve(label_sources(split), grid, config, attacker_seed(seed), tolerance, metric);
}

std::vector<std::string> protocol_notes() {
    return {
        "leakage is attacker accuracy on gender-balanced held-out pools (chance = 50%), not a fraction over the "
        "whole dataset",
        "lambda_D(F1) perturbs labels by symmetric independent bit flips (multi_label) or uniform replacement by a "
        "different label (multi_class), with the flip probability bisected to the model's micro-F1",
        "alpha = 1 is treated as exact equality for single-label balancing and as a best-effort target for the "
        "multi-label heuristic",
    };
}

void check_consistency(const LeakageReport& r) {
    if (!r.delta) return;
    if (!r.lambda_M || !r.lambda_D_at_perf) throw std::logic_error("report has delta without both estimates");
    const double expected = r.lambda_M->mean - r.lambda_D_at_perf->leakage.mean;
    if (*r.delta != expected) throw std::logic_error("report delta does not equal lambda_M - lambda_D(F1)");
}

nlohmann::ordered_json attacker_config_json(const AttackerConfig& c) {
    nlohmann::ordered_json j;
    j["n_layers"] = c.n_layers;
    j["hidden_dim"] = c.hidden_dim;
    j["epochs"] = c.epochs;
    j["lr"] = c.lr;
    j["batch_size"] = c.batch_size;
    j["rounds"] = c.rounds;
    j["train_n_per_gender"] = c.train_n_per_gender;
    j["eval_n_per_gender"] = c.eval_n_per_gender;
    j["data_fraction"] = c.data_fraction;
    j["scale_pools"] = c.scale_pools;
    return j;
}

nlohmann::ordered_json estimate_json(const LeakageEstimate& e) {
    nlohmann::ordered_json j;
    j["mean"] = e.mean;
    j["std"] = e.std;
    j["rounds"] = e.per_round;
    j["best_epochs"] = e.best_epochs;
    j["input_kind"] = to_string(e.config.input_kind);
    j["config"] = attacker_config_json(e.config);
    j["pools"] = {{"train_n_per_gender", e.pools.train_n_per_gender},
                  {"eval_n_per_gender", e.pools.eval_n_per_gender},
                  {"scale", e.pools.scale}};
    return j;
}

nlohmann::ordered_json report_json(const LeakageReport& r) {
    check_consistency(r);
    nlohmann::ordered_json j;
    j["schema_version"] = kSchemaVersion;
    j["seed"] = r.seed;
    j["audit_examples"] = r.audit_examples;
    j["lambda_D"] = r.lambda_D ? estimate_json(*r.lambda_D) : nlohmann::ordered_json(nullptr);
    if (r.lambda_D_at_perf) {
        auto a = estimate_json(r.lambda_D_at_perf->leakage);
        a["target_f1"] = r.lambda_D_at_perf->target_f1;
        a["f1_metric"] = to_string(r.lambda_D_at_perf->metric);
        a["flip_prob"] = r.lambda_D_at_perf->flip_prob;
        a["achieved_f1"] = r.lambda_D_at_perf->achieved_f1;
        j["lambda_D_at_perf"] = a;
    } else {
        j["lambda_D_at_perf"] = nullptr;
    }
    j["lambda_M"] = r.lambda_M ? estimate_json(*r.lambda_M) : nlohmann::ordered_json(nullptr);
    j["delta"] = r.delta ? nlohmann::ordered_json(*r.delta) : nlohmann::ordered_json(nullptr);
    if (r.performance) {
        j["model_f1"] = r.performance->f1;
        j["model_macro_f1"] = r.performance->macro_f1;
        j["model_map"] = r.performance->map;
        j["map_excluded_labels"] = r.performance->map_excluded_labels;
    }
    j["one_gender_labels"] = r.one_gender_labels;
    j["notes"] = r.notes;
    return j;
}

}  // namespace leakaudit
