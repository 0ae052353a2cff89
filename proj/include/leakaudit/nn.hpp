#pragma once

// Dense MLP engine: forward, analytic backward, Adam, and a finite-difference
// gradient checker. Everything is float64.

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace leakaudit {

/// Row-major so that one row is one example.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

enum class LayerKind { linear, batchnorm1d, leakyrelu };
enum class Mode { train, eval };

std::string to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string& name);

struct LayerSpec {
    LayerKind kind = LayerKind::linear;
    int in_dim = 1;
    int out_dim = 1;
    double negative_slope = 0.01;  // leakyrelu only

    static LayerSpec linear(int in, int out) { return {LayerKind::linear, in, out, 0.01}; }
    static LayerSpec batchnorm(int dim) { return {LayerKind::batchnorm1d, dim, dim, 0.01}; }
    static LayerSpec leakyrelu(int dim, double slope = 0.01) {
        return {LayerKind::leakyrelu, dim, dim, slope};
    }

    std::size_t param_count() const;
    bool operator==(const LayerSpec&) const = default;
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

class MlpModel {
public:
    MlpModel() = default;
    /// Validates the stack and zero-initializes parameters (BN scale = 1).
    explicit MlpModel(std::vector<LayerSpec> layers);

    const std::vector<LayerSpec>& layers() const { return layers_; }
    std::size_t layer_count() const { return layers_.size(); }
    int in_dim() const { return layers_.front().in_dim; }
    int out_dim() const { return layers_.back().out_dim; }
    bool has_batchnorm() const;

    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }
    std::size_t param_offset(std::size_t layer) const { return offsets_[layer]; }

    /// Running statistics, indexed by layer; empty for non-BN layers.
    std::vector<Vector>& running_mean() { return running_mean_; }
    const std::vector<Vector>& running_mean() const { return running_mean_; }
    std::vector<Vector>& running_var() { return running_var_; }
    const std::vector<Vector>& running_var() const { return running_var_; }

    Mode mode() const { return mode_; }
    void set_mode(Mode mode) { mode_ = mode; }

    /// Seed lineage recorded in checkpoints (e.g. "run:7/train/predictor").
    std::string& lineage() { return lineage_; }
    const std::string& lineage() const { return lineage_; }

    /// Uniform(-1/sqrt(in), 1/sqrt(in)) weights, zero biases, BN scale 1 / shift 0.
    void initialize(std::uint64_t seed);

    bool operator==(const MlpModel&) const;

private:
    std::vector<LayerSpec> layers_;
    std::vector<std::size_t> offsets_;
    std::vector<double> params_;
    std::vector<Vector> running_mean_;
    std::vector<Vector> running_var_;
    Mode mode_ = Mode::train;
    std::string lineage_;
};

/// Builds `blocks` x [linear -> batchnorm -> leakyrelu] followed by a linear head.
/// With zero blocks this is a bare linear layer.
MlpModel make_mlp(int in_dim, int hidden_dim, int blocks, int out_dim,
                  double negative_slope = 0.01);

/// Index into ForwardTrace::activations of the output of block `block` (1-based)
/// for a model built with make_mlp.
inline std::size_t block_output_index(int block) { return static_cast<std::size_t>(3 * block); }

struct ForwardTrace {
    Mode mode = Mode::train;
    /// activations[0] is the input; activations[i + 1] is the output of layer i.
    std::vector<Matrix> activations;
    /// Per BN layer: normalized input and 1/sqrt(var + eps) (batch or running).
    std::vector<Matrix> bn_xhat;
    std::vector<Vector> bn_inv_std;
    std::vector<Vector> bn_batch_mean;
    std::vector<Vector> bn_batch_var;  // biased

    Eigen::Index batch_size() const { return activations.front().rows(); }
    const Matrix& output() const { return activations.back(); }
};

/// Pure: does not touch running statistics. Throws std::invalid_argument on a
/// width mismatch, an empty batch, or B = 1 in train mode with batchnorm.
ForwardTrace forward(const MlpModel& model, const Matrix& batch, Mode mode);
inline ForwardTrace forward(const MlpModel& model, const Matrix& batch) {
    return forward(model, batch, model.mode());
}
/// Eval-mode logits only.
Matrix predict(const MlpModel& model, const Matrix& batch);

/// Applies the momentum update using the batch statistics of a train-mode trace.
void update_running_stats(MlpModel& model, const ForwardTrace& trace);

/// Extra gradient injected at an intermediate activation (critic tap points).
struct TapGrad {
    std::size_t activation_index;
    const Matrix* grad;
};

struct Gradients {
    std::vector<double> params;
    Matrix input;
};

/// Gradient of a scalar loss whose derivative w.r.t. the output is
/// `output_grad`, plus any tap gradients, w.r.t. every parameter and the input.
Gradients backward(const MlpModel& model, const ForwardTrace& trace, const Matrix& output_grad,
                   std::span<const TapGrad> taps = {});

// ---------------------------------------------------------------------------
// Loss heads (combined with-logits forms).

enum class LossKind { sigmoid_bce, softmax_ce, squared_error };

struct LossValue {
    double value = 0.0;
    Matrix grad;  // d loss / d logits
};

/// Mean over all B x L entries.
LossValue sigmoid_bce_with_logits(const Matrix& logits, const Matrix& targets01);
/// Mean over the batch; `targets` holds class indices.
LossValue softmax_cross_entropy(const Matrix& logits, std::span<const int> targets);
/// 0.5 * sum of squares, averaged over the batch.
LossValue squared_error(const Matrix& outputs, const Matrix& targets);

/// Targets for any loss kind: class indices for softmax_ce, a dense matrix otherwise.
struct LossTargets {
    Matrix dense;
    std::vector<int> classes;
};
LossValue evaluate_loss(LossKind kind, const Matrix& outputs, const LossTargets& targets);

// ---------------------------------------------------------------------------

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::int64_t t = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    AdamState() = default;
    AdamState(std::size_t n, double learning_rate) : m(n, 0.0), v(n, 0.0), lr(learning_rate) {}
};

/// One bias-corrected Adam step. Throws std::invalid_argument on length
/// mismatch or a non-finite gradient (message names the first bad index).
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state);

/// Forward in train mode, loss, backward, running-stat update and one Adam
/// step. Returns the loss before the update.
double train_step(MlpModel& model, AdamState& adam, const Matrix& batch, LossKind loss,
                  const LossTargets& targets);

/// Rows of `m` in the order given.
Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows);

// ---------------------------------------------------------------------------

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    /// Parameters whose +/- epsilon probes straddle a leakyrelu kink.
    std::size_t nonsmooth = 0;
};

/// Central differences on every parameter (a seeded random subset of 10k when
/// the model is larger). The model is evaluated in its current mode.
/// relative error = |analytic - numeric| / max(|analytic| + |numeric|, 1e-6); the
/// floor sits above central-difference roundoff for gradients that are exactly
/// zero (a bias feeding batchnorm).
GradCheckResult grad_check(const MlpModel& model, const Matrix& batch, LossKind loss,
                           const LossTargets& targets, double epsilon = 1e-5,
                           std::uint64_t subset_seed = 0);

// ---------------------------------------------------------------------------
// Checkpoints: "LKCK" magic, u32 version, u64 header length, JSON header
// (layers, mode, lineage, sizes), then little-endian float64 params followed
// by running mean/var for each BN layer.

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const MlpModel& model, const std::filesystem::path& path);
MlpModel load_checkpoint(const std::filesystem::path& path);

}  // namespace leakaudit
