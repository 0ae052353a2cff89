#pragma once

// Chance-only label degradation r(Y, a) and accuracy-adjusted dataset leakage.
//
// multi_label: every (example, label) bit flips independently with probability p.
// multi_class: each label is replaced, with probability p, by a uniformly drawn
// different label. Flips come from fixed per-seed uniforms, so for one seed the
// flipped set only grows with p.

#include "leakaudit/attacker.hpp"
#include "leakaudit/dataset.hpp"
#include "leakaudit/metrics.hpp"

#include <vector>

namespace leakaudit {

/// Number of seeded simulations averaged per bisection probe.
inline constexpr int kPerturbProbeDraws = 5;

Matrix perturb_labels(const Matrix& gold01, TaskKind task_kind, double flip_prob, std::uint64_t seed);

/// Upper end of the flip-probability bracket: 0.5 (multi_label) or 1 (multi_class).
double max_flip_prob(TaskKind task_kind);

/// Mean F1 of perturbed-vs-true labels at the bracket's upper end.
double perturbation_floor(const Matrix& gold01, TaskKind task_kind, std::uint64_t seed,
                          F1Kind metric = F1Kind::micro);

struct PerturbResult {
    Matrix labels;
    double flip_prob = 0.0;
    double achieved_f1 = 1.0;
    double target_f1 = 1.0;
    double tolerance = 0.01;
    std::uint64_t seed = 0;
    /// Seed of the accepted draw (after redraws to land within tolerance).
    std::uint64_t draw_seed = 0;
};

/// Bisection on the flip probability, then a draw within tolerance of the
/// target. Throws std::domain_error when the target is at or below the floor
/// and std::invalid_argument on other bad arguments.
PerturbResult perturb_to_f1(const Matrix& gold01, TaskKind task_kind, double target_f1, double tolerance,
                            std::uint64_t seed, F1Kind metric = F1Kind::micro);
PerturbResult perturb_to_f1(const Dataset& dataset, double target_f1, double tolerance, std::uint64_t seed,
                            F1Kind metric = F1Kind::micro);

/// Flip probability whose mean F1 (over kPerturbProbeDraws draws) is the target.
double solve_flip_prob(const Matrix& gold01, TaskKind task_kind, double target_f1, std::uint64_t seed,
                       F1Kind metric = F1Kind::micro);

/// Ground-truth labels split into attacker sources (see AttackSources).
struct LabelSources {
    TaskKind task_kind = TaskKind::multi_label;
    Matrix train_labels;
    std::vector<Gender> train_genders;
    Matrix eval_labels;
    std::vector<Gender> eval_genders;

    AttackSources as_attack_sources() const;
};

struct AdjustedLeakage {
    LeakageEstimate leakage;
    double target_f1 = 1.0;
    double flip_prob = 0.0;
    F1Kind metric = F1Kind::micro;
    /// Achieved F1 of each round's perturbation.
    std::vector<double> achieved_f1;
    double mean_achieved_f1() const;
};

/// lambda_D(a): one fresh perturbation per round, each within tolerance of
/// `target_f1`, then one attacker round on the perturbed labels. With target 1
/// this is exactly estimate_leakage on the clean labels with the same seed.
AdjustedLeakage leakage_at_f1(const LabelSources& sources, double target_f1, const AttackerConfig& config,
                              std::uint64_t master_seed, double tolerance = 0.01, F1Kind metric = F1Kind::micro);

struct CurvePoint {
    double target_f1 = 1.0;
    AdjustedLeakage value;
};

std::vector<CurvePoint> leakage_vs_f1_curve(const LabelSources& sources, std::span<const double> f1_grid,
                                            const AttackerConfig& config, std::uint64_t master_seed,
                                            double tolerance = 0.01, F1Kind metric = F1Kind::micro);

}  // namespace leakaudit
