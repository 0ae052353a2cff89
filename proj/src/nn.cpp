#include "leakaudit/nn.hpp"

#include "leakaudit/rng.hpp"

#include "json.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace leakaudit {

namespace {

using RowVector = Eigen::RowVectorXd;
using ConstMatrixMap = Eigen::Map<const Matrix>;
using MatrixMap = Eigen::Map<Matrix>;
using ConstRowMap = Eigen::Map<const RowVector>;
using RowMap = Eigen::Map<RowVector>;

std::string shape(const Matrix& m) {
    std::ostringstream os;
    os << "[" << m.rows() << "x" << m.cols() << "]";
    return os.str();
}

void validate(const std::vector<LayerSpec>& layers) {
    if (layers.empty()) throw std::invalid_argument("model has no layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        if (l.in_dim <= 0 || l.out_dim <= 0)
            throw std::invalid_argument("layer " + std::to_string(i) + ": dimensions must be positive");
        if (l.kind != LayerKind::linear && l.in_dim != l.out_dim)
            throw std::invalid_argument("layer " + std::to_string(i) + ": " + to_string(l.kind) +
                                        " requires in_dim == out_dim");
        if (l.kind == LayerKind::leakyrelu && !(l.negative_slope > 0.0 && l.negative_slope < 1.0))
            throw std::invalid_argument("layer " + std::to_string(i) +
                                        ": negative_slope must lie in (0, 1)");
        if (i > 0 && layers[i - 1].out_dim != l.in_dim)
            throw std::invalid_argument("layer " + std::to_string(i) + ": in_dim " +
                                        std::to_string(l.in_dim) + " does not match previous out_dim " +
                                        std::to_string(layers[i - 1].out_dim));
    }
}

}  // namespace

std::string to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::linear: return "linear";
        case LayerKind::batchnorm1d: return "batchnorm1d";
        case LayerKind::leakyrelu: return "leakyrelu";
    }
    return "unknown";
}

LayerKind layer_kind_from_string(const std::string& name) {
    if (name == "linear") return LayerKind::linear;
    if (name == "batchnorm1d") return LayerKind::batchnorm1d;
    if (name == "leakyrelu") return LayerKind::leakyrelu;
    throw std::invalid_argument("unknown layer kind '" + name + "'");
}

std::size_t LayerSpec::param_count() const {
    switch (kind) {
        case LayerKind::linear:
            return static_cast<std::size_t>(out_dim) * static_cast<std::size_t>(in_dim + 1);
        case LayerKind::batchnorm1d: return 2 * static_cast<std::size_t>(out_dim);
        case LayerKind::leakyrelu: return 0;
    }
    return 0;
}

MlpModel::MlpModel(std::vector<LayerSpec> layers) : layers_(std::move(layers)) {
    validate(layers_);
    std::size_t total = 0;
    for (const auto& l : layers_) {
        offsets_.push_back(total);
        total += l.param_count();
    }
    params_.assign(total, 0.0);
    running_mean_.resize(layers_.size());
    running_var_.resize(layers_.size());
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        if (layers_[i].kind != LayerKind::batchnorm1d) continue;
        const int d = layers_[i].out_dim;
        running_mean_[i] = Vector::Zero(d);
        running_var_[i] = Vector::Ones(d);
        std::fill_n(params_.begin() + static_cast<std::ptrdiff_t>(offsets_[i]), d, 1.0);
    }
}

bool MlpModel::has_batchnorm() const {
    return std::any_of(layers_.begin(), layers_.end(),
                       [](const LayerSpec& l) { return l.kind == LayerKind::batchnorm1d; });
}

void MlpModel::initialize(std::uint64_t seed) {
    Rng rng(seed);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto& l = layers_[i];
        double* p = params_.data() + offsets_[i];
        if (l.kind == LayerKind::linear) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(l.in_dim));
            std::uniform_real_distribution<double> dist(-bound, bound);
            const std::size_t nw = static_cast<std::size_t>(l.out_dim) * l.in_dim;
            for (std::size_t k = 0; k < nw; ++k) p[k] = dist(rng);
            std::fill_n(p + nw, l.out_dim, 0.0);
        } else if (l.kind == LayerKind::batchnorm1d) {
            std::fill_n(p, l.out_dim, 1.0);
            std::fill_n(p + l.out_dim, l.out_dim, 0.0);
            running_mean_[i].setZero();
            running_var_[i].setOnes();
        }
    }
}

bool MlpModel::operator==(const MlpModel& other) const {
    if (layers_ != other.layers_ || params_ != other.params_) return false;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        if (running_mean_[i].size() != other.running_mean_[i].size()) return false;
        if (running_mean_[i] != other.running_mean_[i]) return false;
        if (running_var_[i] != other.running_var_[i]) return false;
    }
    return true;
}

MlpModel make_mlp(int in_dim, int hidden_dim, int blocks, int out_dim, double negative_slope) {
    std::vector<LayerSpec> layers;
    int d = in_dim;
    for (int b = 0; b < blocks; ++b) {
        layers.push_back(LayerSpec::linear(d, hidden_dim));
        layers.push_back(LayerSpec::batchnorm(hidden_dim));
        layers.push_back(LayerSpec::leakyrelu(hidden_dim, negative_slope));
        d = hidden_dim;
    }
    layers.push_back(LayerSpec::linear(d, out_dim));
    return MlpModel(std::move(layers));
}

ForwardTrace forward(const MlpModel& model, const Matrix& batch, Mode mode) {
    if (batch.rows() < 1) throw std::invalid_argument("forward: empty batch");
    if (batch.cols() != model.in_dim())
        throw std::invalid_argument("forward: batch shape " + shape(batch) + " but model expects width " +
                                    std::to_string(model.in_dim()));
    if (mode == Mode::train && batch.rows() < 2 && model.has_batchnorm())
        throw std::invalid_argument("forward: batch of 1 in train mode with batchnorm (variance undefined)");

    const auto& layers = model.layers();
    const auto& params = model.params();
    ForwardTrace trace;
    trace.mode = mode;
    trace.activations.reserve(layers.size() + 1);
    trace.activations.push_back(batch);
    trace.bn_xhat.resize(layers.size());
    trace.bn_inv_std.resize(layers.size());
    trace.bn_batch_mean.resize(layers.size());
    trace.bn_batch_var.resize(layers.size());

    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        const Matrix& x = trace.activations.back();
        const double* p = params.data() + model.param_offset(i);
        Matrix y;
        switch (l.kind) {
            case LayerKind::linear: {
                ConstMatrixMap w(p, l.out_dim, l.in_dim);
                ConstRowMap b(p + static_cast<std::size_t>(l.out_dim) * l.in_dim, l.out_dim);
                y.noalias() = x * w.transpose();
                y.rowwise() += b;
                break;
            }
            case LayerKind::batchnorm1d: {
                ConstRowMap gamma(p, l.out_dim);
                ConstRowMap beta(p + l.out_dim, l.out_dim);
                RowVector mean;
                RowVector var;
                if (mode == Mode::train) {
                    mean = x.colwise().mean();
                    var = (x.rowwise() - mean).array().square().colwise().mean();
                    trace.bn_batch_mean[i] = mean.transpose();
                    trace.bn_batch_var[i] = var.transpose();
                } else {
                    mean = model.running_mean()[i].transpose();
                    var = model.running_var()[i].transpose();
                }
                RowVector inv = (var.array() + kBatchNormEps).rsqrt();
                Matrix xhat = (x.rowwise() - mean).array().rowwise() * inv.array();
                y = (xhat.array().rowwise() * gamma.array()).rowwise() + beta.array();
                trace.bn_xhat[i] = std::move(xhat);
                trace.bn_inv_std[i] = inv.transpose();
                break;
            }
            case LayerKind::leakyrelu: {
                const double slope = l.negative_slope;
                y = x.unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
                break;
            }
        }
        trace.activations.push_back(std::move(y));
    }
    return trace;
}

Matrix predict(const MlpModel& model, const Matrix& batch) {
    return forward(model, batch, Mode::eval).output();
}

void update_running_stats(MlpModel& model, const ForwardTrace& trace) {
    if (trace.mode != Mode::train) return;
    const double n = static_cast<double>(trace.batch_size());
    for (std::size_t i = 0; i < model.layer_count(); ++i) {
        if (model.layers()[i].kind != LayerKind::batchnorm1d) continue;
        const Vector unbiased = trace.bn_batch_var[i] * (n / (n - 1.0));
        model.running_mean()[i] =
            (1.0 - kBatchNormMomentum) * model.running_mean()[i] + kBatchNormMomentum * trace.bn_batch_mean[i];
        model.running_var()[i] = (1.0 - kBatchNormMomentum) * model.running_var()[i] + kBatchNormMomentum * unbiased;
    }
}

Gradients backward(const MlpModel& model, const ForwardTrace& trace, const Matrix& output_grad,
                   std::span<const TapGrad> taps) {
    const auto& layers = model.layers();
    if (trace.activations.size() != layers.size() + 1)
        throw std::invalid_argument("backward: trace does not belong to this model");
    if (output_grad.rows() != trace.batch_size() || output_grad.cols() != model.out_dim())
        throw std::invalid_argument("backward: stale activations, output grad " + shape(output_grad) +
                                    " vs trace output " + shape(trace.output()));

    const auto& params = model.params();
    Gradients grads;
    grads.params.assign(params.size(), 0.0);
    Matrix g = output_grad;

    auto add_taps = [&](std::size_t index) {
        for (const auto& tap : taps) {
            if (tap.activation_index != index) continue;
            const Matrix& a = trace.activations[index];
            if (tap.grad->rows() != a.rows() || tap.grad->cols() != a.cols())
                throw std::invalid_argument("backward: tap gradient " + shape(*tap.grad) +
                                            " does not match activation " + shape(a));
            g += *tap.grad;
        }
    };

    for (std::size_t ii = layers.size(); ii-- > 0;) {
        const auto& l = layers[ii];
        add_taps(ii + 1);
        const Matrix& x = trace.activations[ii];
        const double* p = params.data() + model.param_offset(ii);
        double* gp = grads.params.data() + model.param_offset(ii);
        switch (l.kind) {
            case LayerKind::linear: {
                ConstMatrixMap w(p, l.out_dim, l.in_dim);
                MatrixMap dw(gp, l.out_dim, l.in_dim);
                RowMap db(gp + static_cast<std::size_t>(l.out_dim) * l.in_dim, l.out_dim);
                // reduce into aligned temporaries: writing straight into the
                // maps makes the summation order depend on heap alignment
                const Matrix dw_tmp = g.transpose() * x;
                const RowVector db_tmp = g.colwise().sum();
                dw = dw_tmp;
                db = db_tmp;
                Matrix dx;
                dx.noalias() = g * w;
                g = std::move(dx);
                break;
            }
            case LayerKind::batchnorm1d: {
                ConstRowMap gamma(p, l.out_dim);
                RowMap dgamma(gp, l.out_dim);
                RowMap dbeta(gp + l.out_dim, l.out_dim);
                const Matrix& xhat = trace.bn_xhat[ii];
                const RowVector inv = trace.bn_inv_std[ii].transpose();
                const RowVector dgamma_tmp = (g.array() * xhat.array()).colwise().sum();
                const RowVector dbeta_tmp = g.colwise().sum();
                dgamma = dgamma_tmp;
                dbeta = dbeta_tmp;
                Matrix dxhat = g.array().rowwise() * gamma.array();
                if (trace.mode == Mode::train) {
                    const double n = static_cast<double>(trace.batch_size());
                    const RowVector sum_dxhat = dxhat.colwise().sum();
                    const RowVector sum_dxhat_xhat = (dxhat.array() * xhat.array()).colwise().sum();
                    Matrix centered = (n * dxhat).rowwise() - sum_dxhat;
                    centered -= (xhat.array().rowwise() * sum_dxhat_xhat.array()).matrix();
                    g = (centered.array().rowwise() * (inv.array() / n)).matrix();
                } else {
                    g = dxhat.array().rowwise() * inv.array();
                }
                break;
            }
            case LayerKind::leakyrelu: {
                const double slope = l.negative_slope;
                g = g.binaryExpr(x, [slope](double gv, double xv) { return xv > 0.0 ? gv : slope * gv; });
                break;
            }
        }
    }
    add_taps(0);
    grads.input = std::move(g);
    return grads;
}

// ---------------------------------------------------------------------------

LossValue sigmoid_bce_with_logits(const Matrix& logits, const Matrix& targets01) {
    if (logits.rows() != targets01.rows() || logits.cols() != targets01.cols())
        throw std::invalid_argument("sigmoid_bce: logits " + shape(logits) + " vs targets " + shape(targets01));
    const double n = static_cast<double>(logits.size());
    LossValue out;
    out.grad.resize(logits.rows(), logits.cols());
    double total = 0.0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        for (Eigen::Index j = 0; j < logits.cols(); ++j) {
            const double z = logits(i, j);
            const double t = targets01(i, j);
            total += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
            const double s = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
            out.grad(i, j) = (s - t) / n;
        }
    }
    out.value = total / n;
    return out;
}

LossValue softmax_cross_entropy(const Matrix& logits, std::span<const int> targets) {
    if (static_cast<Eigen::Index>(targets.size()) != logits.rows())
        throw std::invalid_argument("softmax_ce: " + std::to_string(targets.size()) + " targets for logits " +
                                    shape(logits));
    const double n = static_cast<double>(logits.rows());
    LossValue out;
    out.grad.resize(logits.rows(), logits.cols());
    double total = 0.0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const int t = targets[static_cast<std::size_t>(i)];
        if (t < 0 || t >= logits.cols()) throw std::invalid_argument("softmax_ce: target out of range");
        const double mx = logits.row(i).maxCoeff();
        const Eigen::RowVectorXd e = (logits.row(i).array() - mx).exp();
        const double sum = e.sum();
        total += std::log(sum) + mx - logits(i, t);
        out.grad.row(i) = e / sum;
        out.grad(i, t) -= 1.0;
    }
    out.grad /= n;
    out.value = total / n;
    return out;
}

LossValue squared_error(const Matrix& outputs, const Matrix& targets) {
    if (outputs.rows() != targets.rows() || outputs.cols() != targets.cols())
        throw std::invalid_argument("squared_error: outputs " + shape(outputs) + " vs targets " + shape(targets));
    const double n = static_cast<double>(outputs.rows());
    LossValue out;
    const Matrix diff = outputs - targets;
    out.value = 0.5 * diff.squaredNorm() / n;
    out.grad = diff / n;
    return out;
}

LossValue evaluate_loss(LossKind kind, const Matrix& outputs, const LossTargets& targets) {
    switch (kind) {
        case LossKind::sigmoid_bce: return sigmoid_bce_with_logits(outputs, targets.dense);
        case LossKind::softmax_ce: return softmax_cross_entropy(outputs, targets.classes);
        case LossKind::squared_error: return squared_error(outputs, targets.dense);
    }
    throw std::invalid_argument("unknown loss kind");
}

// ---------------------------------------------------------------------------

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state) {
    if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size())
        throw std::invalid_argument("adam_step: length mismatch (params " + std::to_string(params.size()) +
                                    ", grads " + std::to_string(grads.size()) + ", state " +
                                    std::to_string(state.m.size()) + ")");
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (!std::isfinite(grads[i]))
            throw std::invalid_argument("adam_step: non-finite gradient at index " + std::to_string(i));
    }
    state.t += 1;
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        const double mhat = state.m[i] / c1;
        const double vhat = state.v[i] / c2;
        params[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
}

double train_step(MlpModel& model, AdamState& adam, const Matrix& batch, LossKind loss,
                  const LossTargets& targets) {
    const ForwardTrace trace = forward(model, batch, Mode::train);
    const LossValue lv = evaluate_loss(loss, trace.output(), targets);
    const Gradients g = backward(model, trace, lv.grad);
    update_running_stats(model, trace);
    adam_step(model.params(), g.params, adam);
    return lv.value;
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
    return out;
}

// ---------------------------------------------------------------------------

namespace {

/// Sign pattern (x > 0) of every leakyrelu input, flattened.
std::vector<bool> kink_pattern(const MlpModel& model, const ForwardTrace& trace) {
    std::vector<bool> pattern;
    for (std::size_t i = 0; i < model.layer_count(); ++i) {
        if (model.layers()[i].kind != LayerKind::leakyrelu) continue;
        const Matrix& x = trace.activations[i];
        for (Eigen::Index k = 0; k < x.size(); ++k) pattern.push_back(x.data()[k] > 0.0);
    }
    return pattern;
}

}  // namespace

GradCheckResult grad_check(const MlpModel& model, const Matrix& batch, LossKind loss,
                           const LossTargets& targets, double epsilon, std::uint64_t subset_seed) {
    if (!(epsilon >= 1e-6 && epsilon <= 1e-3))
        throw std::invalid_argument("grad_check: epsilon must lie in [1e-6, 1e-3]");
    const Mode mode = model.mode();
    const ForwardTrace base = forward(model, batch, mode);
    const LossValue lv = evaluate_loss(loss, base.output(), targets);
    const Gradients analytic = backward(model, base, lv.grad);

    constexpr std::size_t kMaxChecked = 10000;
    std::vector<std::size_t> indices(model.params().size());
    std::iota(indices.begin(), indices.end(), std::size_t{0});
    if (indices.size() > kMaxChecked) {
        Rng rng(subset_seed);
        indices = sample_without_replacement(std::move(indices), kMaxChecked, rng);
    }

    MlpModel probe = model;
    GradCheckResult result;
    for (std::size_t idx : indices) {
        const double original = probe.params()[idx];
        probe.params()[idx] = original + epsilon;
        const ForwardTrace plus = forward(probe, batch, mode);
        const double lp = evaluate_loss(loss, plus.output(), targets).value;
        probe.params()[idx] = original - epsilon;
        const ForwardTrace minus = forward(probe, batch, mode);
        const double lm = evaluate_loss(loss, minus.output(), targets).value;
        probe.params()[idx] = original;

        if (kink_pattern(probe, plus) != kink_pattern(probe, minus)) {
            ++result.nonsmooth;
            continue;
        }
        const double numeric = (lp - lm) / (2.0 * epsilon);
        const double a = analytic.params[idx];
        const double rel = std::abs(a - numeric) / std::max(std::abs(a) + std::abs(numeric), 1e-6);
        result.max_rel_error = std::max(result.max_rel_error, rel);
        ++result.checked;
    }
    return result;
}

// ---------------------------------------------------------------------------

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes little-endian");

constexpr char kMagic[4] = {'L', 'K', 'C', 'K'};

template <typename T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error("checkpoint truncated");
    return v;
}

void write_doubles(std::ostream& os, const double* p, std::size_t n) {
    os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
}

void read_doubles(std::istream& is, double* p, std::size_t n) {
    is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
    if (!is) throw std::runtime_error("checkpoint truncated");
}

}  // namespace

void save_checkpoint(const MlpModel& model, const std::filesystem::path& path) {
    nlohmann::json header;
    header["format"] = "leakaudit-checkpoint";
    header["mode"] = model.mode() == Mode::train ? "train" : "eval";
    header["lineage"] = model.lineage();
    header["param_count"] = model.params().size();
    auto& layers = header["layers"] = nlohmann::json::array();
    for (const auto& l : model.layers()) {
        layers.push_back({{"kind", to_string(l.kind)},
                          {"in_dim", l.in_dim},
                          {"out_dim", l.out_dim},
                          {"negative_slope", l.negative_slope}});
    }
    const std::string text = header.dump();

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write checkpoint " + path.string());
    os.write(kMagic, 4);
    write_pod(os, kCheckpointVersion);
    write_pod(os, static_cast<std::uint64_t>(text.size()));
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    write_doubles(os, model.params().data(), model.params().size());
    for (std::size_t i = 0; i < model.layer_count(); ++i) {
        if (model.layers()[i].kind != LayerKind::batchnorm1d) continue;
        write_doubles(os, model.running_mean()[i].data(), static_cast<std::size_t>(model.running_mean()[i].size()));
        write_doubles(os, model.running_var()[i].data(), static_cast<std::size_t>(model.running_var()[i].size()));
    }
    if (!os) throw std::runtime_error("failed writing checkpoint " + path.string());
}

MlpModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
    char magic[4];
    is.read(magic, 4);
    if (!is || !std::equal(magic, magic + 4, kMagic))
        throw std::runtime_error(path.string() + " is not a leakaudit checkpoint");
    const auto version = read_pod<std::uint32_t>(is);
    if (version != kCheckpointVersion)
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    const auto len = read_pod<std::uint64_t>(is);
    std::string text(len, '\0');
    is.read(text.data(), static_cast<std::streamsize>(len));
    if (!is) throw std::runtime_error("checkpoint truncated");
    const auto header = nlohmann::json::parse(text);

    std::vector<LayerSpec> layers;
    for (const auto& l : header.at("layers")) {
        layers.push_back({layer_kind_from_string(l.at("kind").get<std::string>()), l.at("in_dim").get<int>(),
                          l.at("out_dim").get<int>(), l.at("negative_slope").get<double>()});
    }
    MlpModel model(std::move(layers));
    if (header.at("param_count").get<std::size_t>() != model.params().size())
        throw std::runtime_error("checkpoint parameter count does not match its layers");
    model.set_mode(header.at("mode").get<std::string>() == "train" ? Mode::train : Mode::eval);
    model.lineage() = header.at("lineage").get<std::string>();
    read_doubles(is, model.params().data(), model.params().size());
    for (std::size_t i = 0; i < model.layer_count(); ++i) {
        if (model.layers()[i].kind != LayerKind::batchnorm1d) continue;
        read_doubles(is, model.running_mean()[i].data(), static_cast<std::size_t>(model.running_mean()[i].size()));
        read_doubles(is, model.running_var()[i].data(), static_cast<std::size_t>(model.running_var()[i].size()));
    }
    return model;
}

}  // namespace leakaudit
