#pragma once

// Task predictor training, adversarial debiasing at a tap point, the masked
// input-space variant, and the randomization / feature-ablation baselines.

#include "leakaudit/attacker.hpp"
#include "leakaudit/dataset.hpp"
#include "leakaudit/metrics.hpp"

#include "json.hpp"

#include <optional>
#include <stdexcept>

namespace leakaudit {

enum class Tap { input_mask, hidden, embedding };
std::string to_string(Tap tap);
Tap tap_from_string(const std::string& name);

class DebiasError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TrainConfig {
    int hidden_dim = 64;
    int blocks = 2;
    double lr = 1e-3;
    int batch_size = 64;
    int max_epochs = 60;
    /// Stop after this many epochs without a dev-F1 improvement.
    int patience = 10;
    /// false: keep the last epoch instead of the best-dev-F1 snapshot.
    bool restore_best = true;
    double negative_slope = 0.01;
};

struct BaselineResult {
    MlpModel model;  // best-dev-F1 snapshot unless restore_best is off
    int best_epoch = 0;
    int epochs_run = 0;
    std::vector<double> train_loss;
    std::vector<double> dev_f1;
};

/// Plain task training. Throws DebiasError when the loss goes non-finite.
BaselineResult train_baseline(const Dataset& train, const Dataset& dev, const TrainConfig& config, std::uint64_t seed);

/// Activation index (into ForwardTrace::activations) of a tap for make_mlp
/// predictors: embedding = last block output, hidden = block blocks/2.
std::size_t tap_activation_index(Tap tap, int blocks);

struct AdvStepLoss {
    double task = 0.0;
    double adv = 0.0;
    double total = 0.0;  // task - lambda * adv
};

/// One predictor update on task loss - lambda * critic loss at the tap. The
/// critic is evaluated in eval mode and never modified.
AdvStepLoss adversarial_step(MlpModel& predictor, AdamState& adam, const MlpModel& critic, std::size_t tap_index,
                             const Matrix& batch, LossKind loss, const LossTargets& targets,
                             std::span<const int> genders, double lambda);

struct DebiasConfig {
    Tap tap = Tap::embedding;
    double lambda_adv = 1.0;
    double beta_recon = 0.0;  // input_mask only
    int critic_warmup_epochs = 10;
    int critic_steps = 1;
    int adv_epochs = 100;
    double predictor_lr = 1e-4;
    double critic_lr = 1e-3;
    int critic_hidden_dim = 64;
    int critic_blocks = 2;
    int mask_hidden_dim = 64;
    /// Mask generator learning rate in the adversarial phase.
    double mask_lr = 1e-3;
    int batch_size = 64;
    /// lambda_D of the training labels; when above 60 a critic that cannot
    /// reach 55% after warmup aborts the run.
    std::optional<double> reference_leakage;
    TrainConfig predictor;
    std::uint64_t seed = 0;
};

void validate(const DebiasConfig& config);

struct EpochTrace {
    int epoch = 0;
    std::string phase;  // "warmup" or "adversarial"
    double task_loss = 0.0;
    double adv_loss = 0.0;
    double recon_loss = 0.0;
    /// task + beta * recon - lambda * adv, averaged over predictor steps.
    double total_loss = 0.0;
    double dev_f1 = 0.0;
    /// Balanced accuracy (%) of the critic on dev representations.
    double critic_dev_accuracy = 50.0;
};

struct DebiasResult {
    MlpModel predictor;
    MlpModel critic;
    std::optional<MlpModel> mask_generator;
    /// Mean mask value per input dimension over the training set.
    std::vector<double> mean_mask;
    std::vector<EpochTrace> trace;
    double warmup_critic_accuracy = 50.0;
    std::size_t tap_index = 0;
    int selected_epoch = 0;
    BaselineResult baseline;
};

/// Phase 1 trains (or takes) the baseline predictor, phase 2 warms up the
/// critic on frozen representations, phase 3 alternates critic and predictor
/// updates. The last epoch is returned.
DebiasResult adv_train(const Dataset& train, const Dataset& dev, const DebiasConfig& config,
                       const BaselineResult* baseline = nullptr);

/// tap = input_mask: X_hat = sigmoid(G(X)) * X feeds both predictor and critic.
DebiasResult adv_train_masked(const Dataset& train, const Dataset& dev, const DebiasConfig& config);

/// Logits of a trained predictor (through the mask generator when given).
Matrix predict_logits(const DebiasResult& result, const Matrix& features);
Predictions predict_dataset(const MlpModel& model, const Dataset& dataset);
Predictions predict_dataset(const DebiasResult& result, const Dataset& dataset);

/// Eval-mode activations at `activation_index`.
Matrix representations(const MlpModel& model, const Matrix& features, std::size_t activation_index);

/// Balanced accuracy in percent.
double balanced_accuracy(const Matrix& gender_logits, std::span<const Gender> genders);

struct NoisePoint {
    double sigma = 0.0;
    double f1 = 0.0;
    LeakageEstimate lambda_M;
};

/// Gaussian noise of std sigma * (per-dim embedding std) added before the
/// head; the same standard-normal draws are scaled for every sigma. lambda_M
/// uses the audit split of run_audit with the same seed.
std::vector<NoisePoint> noise_sweep(const MlpModel& model, const Dataset& audit, std::span<const double> sigmas,
                                    const AttackerConfig& attacker, std::uint64_t seed);

enum class AblationMode { zero, noise };
AblationMode ablation_mode_from_string(const std::string& name);

/// zero: dims set to 0. noise: dims replaced by N(mean, std) of their marginal.
Dataset feature_ablation(const Dataset& dataset, std::span<const int> dims, AblationMode mode, std::uint64_t seed);

nlohmann::ordered_json debias_config_json(const DebiasConfig& config);
nlohmann::ordered_json trace_json(const std::vector<EpochTrace>& trace);

}  // namespace leakaudit
