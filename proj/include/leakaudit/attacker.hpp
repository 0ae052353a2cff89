#pragma once

// Gender attacker: an MLP trained on label vectors or logits whose balanced
// held-out accuracy is the leakage estimate.

#include "leakaudit/dataset.hpp"

#include <optional>
#include <string>
#include <vector>

namespace leakaudit {

enum class InputKind { binary_labels, logits };
std::string to_string(InputKind kind);
InputKind input_kind_from_string(const std::string& name);

struct AttackerConfig {
    /// n_layers [linear, batchnorm, leakyrelu] blocks plus the 2-way head;
    /// 1 is special-cased to a bare linear classifier.
    int n_layers = 4;
    int hidden_dim = 300;
    int epochs = 100;
    double lr = 5e-5;
    int batch_size = 128;
    int rounds = 10;
    int train_n_per_gender = 500;
    /// Size of the attacker dev pool and of the test pool, each.
    int eval_n_per_gender = 250;
    InputKind input_kind = InputKind::binary_labels;
    /// Fraction of the training pool actually used.
    double data_fraction = 1.0;
    /// Shrink all pools by a common factor when a source is too small instead
    /// of failing.
    bool scale_pools = true;
    double negative_slope = 0.01;

    bool operator==(const AttackerConfig&) const = default;
};

void validate(const AttackerConfig& config);

/// Hidden blocks for a given n_layers: 0 for 1, n_layers otherwise.
int attacker_blocks(int n_layers);

/// Per-dimension z-scoring fitted on attacker-train inputs (identity for
/// binary labels).
struct Standardizer {
    Vector mean;
    Vector scale;

    static Standardizer identity(int width);
    static Standardizer fit(const Matrix& inputs);
    Matrix apply(const Matrix& inputs) const;
};

struct AttackerModel {
    MlpModel model;
    Standardizer standardizer;
    double best_dev_accuracy = 0.0;
    int best_epoch = -1;
};

/// Balanced accuracy of argmax over the 2-way head (class 0 = M, 1 = W).
double gender_accuracy(const MlpModel& model, const Matrix& standardized_inputs, std::span<const Gender> genders);

/// Trains on a gender-balanced pool with gender-balanced minibatches and keeps
/// the epoch snapshot with the highest dev accuracy.
AttackerModel train_attacker(const Matrix& train_inputs, std::span<const Gender> train_genders,
                             const Matrix& dev_inputs, std::span<const Gender> dev_genders,
                             const AttackerConfig& config, std::uint64_t seed);

/// Where the pools of one round come from. The training pool is drawn from
/// `train_*`; the disjoint dev and test pools from `eval_*`.
struct AttackSources {
    Matrix train_inputs;
    std::vector<Gender> train_genders;
    Matrix eval_inputs;
    std::vector<Gender> eval_genders;
};

struct PoolSizes {
    int train_n_per_gender = 0;
    int eval_n_per_gender = 0;
    /// Common shrink factor applied (1 when the sources were large enough).
    double scale = 1.0;
};

/// Throws std::invalid_argument when the sources are too small and scaling is
/// disabled (or would leave fewer than 10 examples per gender in a pool).
PoolSizes resolve_pools(const AttackSources& sources, const AttackerConfig& config);

struct RoundResult {
    double test_accuracy = 0.0;  // percent
    double dev_accuracy = 0.0;   // percent
    int best_epoch = -1;
};

/// One train/evaluate cycle; everything random flows from `round_seed`. The
/// pools depend on the seed but not on the architecture fields, so variants
/// evaluated with the same seed share pools.
RoundResult run_attack_round(const AttackSources& sources, const AttackerConfig& config, std::uint64_t round_seed);

struct LeakageEstimate {
    double mean = 0.0;  // percent
    double std = 0.0;   // population std over rounds
    std::vector<double> per_round;
    std::vector<int> best_epochs;
    AttackerConfig config;
    PoolSizes pools;

    /// Mean and std recomputed from per_round.
    static LeakageEstimate from_rounds(std::vector<double> rounds);
};

std::uint64_t round_seed(std::uint64_t master_seed, int round);

LeakageEstimate estimate_leakage(const AttackSources& sources, const AttackerConfig& config,
                                 std::uint64_t master_seed);

struct AttackerVariant {
    int n_layers = 4;
    int hidden_dim = 300;
    double data_fraction = 1.0;
};

struct VariantEstimate {
    AttackerVariant variant;
    LeakageEstimate estimate;
};

/// One estimate per variant; the same round seeds (hence pools) for all.
std::vector<VariantEstimate> robustness_ablation(const AttackSources& sources, const AttackerConfig& base,
                                                 std::span<const AttackerVariant> grid, std::uint64_t master_seed);

/// Ablation grid: 1 layer; 2 layers at 100 and 300 dims; 4 layers at 300
/// dims with 100/75/50/25% of the training data.
std::vector<AttackerVariant> default_ablation_grid();

}  // namespace leakaudit
