#include "leakaudit/debias.hpp"

#include "leakaudit/audit.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <sstream>

namespace leakaudit {

namespace {

LossKind task_loss_kind(const Dataset& d) {
    return d.schema.task_kind == TaskKind::multi_label ? LossKind::sigmoid_bce : LossKind::softmax_ce;
}

LossTargets task_targets(const Dataset& d, std::span<const std::size_t> rows, const Matrix& labels) {
    LossTargets t;
    if (d.schema.task_kind == TaskKind::multi_label) {
        t.dense = gather_rows(labels, rows);
    } else {
        for (auto r : rows) {
            Eigen::Index c;
            labels.row(static_cast<Eigen::Index>(r)).maxCoeff(&c);
            t.classes.push_back(static_cast<int>(c));
        }
    }
    return t;
}

std::vector<int> gender_classes(std::span<const Gender> genders, std::span<const std::size_t> rows) {
    std::vector<int> out;
    out.reserve(rows.size());
    for (auto r : rows) out.push_back(index_of(genders[r]));
    return out;
}

// adam_step rejects non-finite gradients with std::invalid_argument
template <typename F>
auto guarded(long step, F&& f) {
    try {
        return f();
    } catch (const std::invalid_argument& e) {
        throw DebiasError("training diverged at step " + std::to_string(step) + ": " + e.what());
    }
}

void check_finite(double loss, long step) {
    if (!std::isfinite(loss)) throw DebiasError("training diverged: non-finite loss at step " + std::to_string(step));
}

std::size_t effective_batch(std::size_t n, int batch_size) {
    return std::min<std::size_t>(n, static_cast<std::size_t>(batch_size));
}

// Shuffled permutation batches, last partial batch dropped.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, int batch_size, std::uint64_t seed) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    const std::size_t b = effective_batch(n, batch_size);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t start = 0; start + b <= n; start += b) out.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(start), perm.begin() + static_cast<std::ptrdiff_t>(start + b));
    return out;
}

// Half of every batch from each gender, cycling through reshuffled pools.
class BalancedBatcher {
public:
    BalancedBatcher(std::span<const Gender> genders, std::uint64_t seed) : rng_(seed) {
        for (std::size_t i = 0; i < genders.size(); ++i) pools_[static_cast<std::size_t>(index_of(genders[i]))].push_back(i);
        for (auto& p : pools_) {
            if (p.empty()) throw std::invalid_argument("critic training needs both genders");
            std::shuffle(p.begin(), p.end(), rng_);
        }
    }

    std::vector<std::size_t> next(std::size_t batch) {
        std::vector<std::size_t> out;
        for (std::size_t g = 0; g < pools_.size(); ++g)
            for (std::size_t k = 0; k < batch / 2; ++k) {
                if (cursor_[g] == pools_[g].size()) {
                    std::shuffle(pools_[g].begin(), pools_[g].end(), rng_);
                    cursor_[g] = 0;
                }
                out.push_back(pools_[g][cursor_[g]++]);
            }
        return out;
    }

private:
    Rng rng_;
    std::array<std::vector<std::size_t>, kGenderCount> pools_;
    std::array<std::size_t, kGenderCount> cursor_{};
};

Matrix sigmoid(const Matrix& z) { return (1.0 / (1.0 + (-z.array()).exp())).matrix(); }

struct Steps {
    double task = 0.0, adv = 0.0, recon = 0.0, total = 0.0;
    long count = 0;
    void add(double t, double a, double r, double tot) {
        task += t;
        adv += a;
        recon += r;
        total += tot;
        ++count;
    }
    void write(EpochTrace& e) const {
        const double n = count ? static_cast<double>(count) : 1.0;
        e.task_loss = task / n;
        e.adv_loss = adv / n;
        e.recon_loss = recon / n;
        e.total_loss = total / n;
    }
};

MlpModel make_critic(int in_dim, const DebiasConfig& c, std::uint64_t seed) {
    MlpModel m = make_mlp(in_dim, c.critic_hidden_dim, c.critic_blocks, 2);
    m.initialize(derive_seed(seed, "debias/critic_init"));
    m.lineage() = "debias/critic";
    return m;
}

// Critic updates on frozen inputs (already computed representations).
double critic_step(MlpModel& critic, AdamState& adam, const Matrix& reps, std::span<const Gender> genders,
                   std::span<const std::size_t> rows) {
    LossTargets t;
    t.classes = gender_classes(genders, rows);
    return train_step(critic, adam, gather_rows(reps, rows), LossKind::softmax_ce, t);
}

double critic_accuracy(const MlpModel& critic, const Matrix& reps, std::span<const Gender> genders) {
    return balanced_accuracy(predict(critic, reps), genders);
}

}  // namespace

std::string to_string(Tap tap) {
    switch (tap) {
        case Tap::input_mask: return "input_mask";
        case Tap::hidden: return "hidden";
        case Tap::embedding: return "embedding";
    }
    return "?";
}

Tap tap_from_string(const std::string& name) {
    if (name == "input_mask") return Tap::input_mask;
    if (name == "hidden") return Tap::hidden;
    if (name == "embedding") return Tap::embedding;
    throw std::invalid_argument("unknown tap '" + name + "' (expected input_mask, hidden or embedding)");
}

double balanced_accuracy(const Matrix& gender_logits, std::span<const Gender> genders) {
    std::array<double, kGenderCount> hit{}, total{};
    for (Eigen::Index i = 0; i < gender_logits.rows(); ++i) {
        const auto g = static_cast<std::size_t>(index_of(genders[static_cast<std::size_t>(i)]));
        const int pred = gender_logits(i, 1) > gender_logits(i, 0) ? 1 : 0;
        total[g] += 1.0;
        if (pred == static_cast<int>(g)) hit[g] += 1.0;
    }
    double acc = 0.0;
    for (std::size_t g = 0; g < kGenderCount; ++g) acc += total[g] > 0 ? hit[g] / total[g] : 0.0;
    return 100.0 * acc / kGenderCount;
}

Matrix representations(const MlpModel& model, const Matrix& features, std::size_t activation_index) {
    return forward(model, features, Mode::eval).activations.at(activation_index);
}

std::size_t tap_activation_index(Tap tap, int blocks) {
    if (blocks < 1) throw std::invalid_argument("tapped predictors need at least one hidden block");
    switch (tap) {
        case Tap::embedding: return block_output_index(blocks);
        case Tap::hidden: return block_output_index(std::max(1, blocks / 2));
        case Tap::input_mask: return 0;
    }
    return 0;
}

BaselineResult train_baseline(const Dataset& train, const Dataset& dev, const TrainConfig& c, std::uint64_t seed) {
    if (c.max_epochs < 1 || c.patience < 1 || c.batch_size < 2) throw std::invalid_argument("bad train config");
    const Matrix x = feature_matrix(train);
    const Matrix y = label_matrix(train);
    const Matrix xdev = feature_matrix(dev);
    if (x.rows() < 2) throw std::invalid_argument("training needs at least 2 examples");

    BaselineResult r;
    r.model = make_mlp(static_cast<int>(x.cols()), c.hidden_dim, c.blocks, static_cast<int>(y.cols()), c.negative_slope);
    r.model.initialize(derive_seed(seed, "train/init"));
    r.model.lineage() = "train/predictor";
    AdamState adam(r.model.params().size(), c.lr);
    const LossKind kind = task_loss_kind(train);

    double best = -1.0;
    long step = 0;
    int since_best = 0;
    MlpModel best_model = r.model;
    for (int epoch = 0; epoch < c.max_epochs; ++epoch) {
        r.model.set_mode(Mode::train);
        double total = 0.0;
        const auto batches = epoch_batches(train.size(), c.batch_size, derive_seed(seed, "train/epoch", static_cast<std::uint64_t>(epoch)));
        for (const auto& rows : batches) {
            const double loss =
                guarded(step, [&] { return train_step(r.model, adam, gather_rows(x, rows), kind, task_targets(train, rows, y)); });
            check_finite(loss, step++);
            total += loss;
        }
        r.model.set_mode(Mode::eval);
        const double f = f1(predict(r.model, xdev), dev);
        r.train_loss.push_back(total / static_cast<double>(batches.size()));
        r.dev_f1.push_back(f);
        r.epochs_run = epoch + 1;
        if (f > best) {
            best = f;
            best_model = r.model;
            r.best_epoch = epoch + 1;
            since_best = 0;
        } else if (++since_best >= c.patience) {
            break;
        }
    }
    if (c.restore_best) r.model = std::move(best_model);
    r.model.set_mode(Mode::eval);
    return r;
}

AdvStepLoss adversarial_step(MlpModel& predictor, AdamState& adam, const MlpModel& critic, std::size_t tap_index,
                             const Matrix& batch, LossKind loss, const LossTargets& targets,
                             std::span<const int> genders, double lambda) {
    const ForwardTrace pt = forward(predictor, batch, Mode::train);
    const LossValue task = evaluate_loss(loss, pt.output(), targets);
    const ForwardTrace ct = forward(critic, pt.activations.at(tap_index), Mode::eval);
    const LossValue adv = softmax_cross_entropy(ct.output(), genders);
    const Matrix tap_grad = -lambda * backward(critic, ct, adv.grad).input;
    const TapGrad tg{tap_index, &tap_grad};
    const Gradients pg = backward(predictor, pt, task.grad, {&tg, 1});
    update_running_stats(predictor, pt);
    adam_step(predictor.params(), pg.params, adam);
    return {task.value, adv.value, task.value - lambda * adv.value};
}

void validate(const DebiasConfig& c) {
    if (!(c.lambda_adv >= 0.0)) throw std::invalid_argument("lambda_adv must be >= 0");
    if (!(c.beta_recon >= 0.0)) throw std::invalid_argument("beta_recon must be >= 0");
    if (c.tap != Tap::input_mask && c.beta_recon != 0.0)
        throw std::invalid_argument("beta_recon is only used with tap = input_mask");
    if (c.critic_warmup_epochs < 0 || c.critic_steps < 0 || c.adv_epochs < 0)
        throw std::invalid_argument("epoch and step counts must be >= 0");
    if (c.batch_size < 2 || c.batch_size % 2) throw std::invalid_argument("batch_size must be even and >= 2");
    if (!(c.predictor_lr > 0.0) || !(c.critic_lr > 0.0) || !(c.mask_lr > 0.0)) throw std::invalid_argument("learning rates must be > 0");
}

DebiasResult adv_train(const Dataset& train, const Dataset& dev, const DebiasConfig& c, const BaselineResult* baseline) {
    validate(c);
    if (c.tap == Tap::input_mask) throw std::invalid_argument("adv_train: use adv_train_masked for tap = input_mask");
    DebiasResult r;
    r.baseline = baseline ? *baseline : train_baseline(train, dev, c.predictor, c.seed);
    r.predictor = r.baseline.model;
    r.tap_index = tap_activation_index(c.tap, c.predictor.blocks);

    const Matrix x = feature_matrix(train);
    const Matrix y = label_matrix(train);
    const Matrix xdev = feature_matrix(dev);
    const auto g = genders_of(train);
    const auto gdev = genders_of(dev);
    const LossKind kind = task_loss_kind(train);
    const std::size_t batch = effective_batch(train.size(), c.batch_size) / 2 * 2;
    const std::size_t per_epoch = std::max<std::size_t>(1, train.size() / batch);

    const int tap_dim = static_cast<int>(representations(r.predictor, xdev.topRows(1), r.tap_index).cols());
    r.critic = make_critic(tap_dim, c, c.seed);
    AdamState cadam(r.critic.params().size(), c.critic_lr);
    AdamState padam(r.predictor.params().size(), c.predictor_lr);
    BalancedBatcher critic_batches(g, derive_seed(c.seed, "debias/critic_batches"));
    BalancedBatcher predictor_batches(g, derive_seed(c.seed, "debias/predictor_batches"));
    long step = 0;

    auto dev_eval = [&](EpochTrace& e) {
        e.dev_f1 = f1(predict(r.predictor, xdev), dev);
        e.critic_dev_accuracy = critic_accuracy(r.critic, representations(r.predictor, xdev, r.tap_index), gdev);
    };

    // phase 2: critic alone, representation frozen
    for (int epoch = 0; epoch < c.critic_warmup_epochs; ++epoch) {
        const Matrix reps = representations(r.predictor, x, r.tap_index);
        Steps s;
        for (std::size_t b = 0; b < per_epoch; ++b) {
            const double loss = critic_step(r.critic, cadam, reps, g, critic_batches.next(batch));
            check_finite(loss, step++);
            s.add(0.0, loss, 0.0, 0.0);
        }
        EpochTrace e;
        e.epoch = epoch + 1;
        e.phase = "warmup";
        s.write(e);
        dev_eval(e);
        r.trace.push_back(e);
    }
    r.warmup_critic_accuracy =
        critic_accuracy(r.critic, representations(r.predictor, xdev, r.tap_index), gdev);
    if (c.lambda_adv > 0.0 && c.critic_warmup_epochs > 0 && c.reference_leakage && *c.reference_leakage > 60.0 &&
        r.warmup_critic_accuracy < 55.0) {
        std::ostringstream os;
        os << "critic reached only " << r.warmup_critic_accuracy << "% after warmup while lambda_D is "
           << *c.reference_leakage << "%; the critic is too weak to guide removal";
        throw DebiasError(os.str());
    }

    // phase 3
    for (int epoch = 0; epoch < c.adv_epochs; ++epoch) {
        Steps s;
        const auto plain = c.lambda_adv == 0.0
                               ? epoch_batches(train.size(), c.batch_size, derive_seed(c.seed, "debias/epoch", static_cast<std::uint64_t>(epoch)))
                               : std::vector<std::vector<std::size_t>>{};
        const std::size_t steps = c.lambda_adv == 0.0 ? plain.size() : per_epoch;
        for (std::size_t b = 0; b < steps; ++b) {
            for (int k = 0; k < c.critic_steps; ++k) {
                const auto rows = critic_batches.next(batch);
                const Matrix reps = representations(r.predictor, gather_rows(x, rows), r.tap_index);
                std::vector<std::size_t> local(rows.size());
                std::iota(local.begin(), local.end(), std::size_t{0});
                std::vector<Gender> lg;
                for (auto i : rows) lg.push_back(g[i]);
                check_finite(critic_step(r.critic, cadam, reps, lg, local), step++);
            }
            if (c.lambda_adv == 0.0) {
                const auto& rows = plain[b];
                const double loss = train_step(r.predictor, padam, gather_rows(x, rows), kind, task_targets(train, rows, y));
                check_finite(loss, step++);
                s.add(loss, 0.0, 0.0, loss);
                continue;
            }
            const auto rows = predictor_batches.next(batch);
            const auto l = guarded(step, [&] {
                return adversarial_step(r.predictor, padam, r.critic, r.tap_index, gather_rows(x, rows), kind,
                                        task_targets(train, rows, y), gender_classes(g, rows), c.lambda_adv);
            });
            check_finite(l.total, step++);
            s.add(l.task, l.adv, 0.0, l.total);
        }
        EpochTrace e;
        e.epoch = epoch + 1;
        e.phase = "adversarial";
        s.write(e);
        dev_eval(e);
        r.trace.push_back(e);
    }
    r.predictor.set_mode(Mode::eval);
    r.critic.set_mode(Mode::eval);
    r.selected_epoch = c.adv_epochs;
    return r;
}

DebiasResult adv_train_masked(const Dataset& train, const Dataset& dev, const DebiasConfig& c) {
    validate(c);
    if (c.tap != Tap::input_mask) throw std::invalid_argument("adv_train_masked needs tap = input_mask");
    const Matrix x = feature_matrix(train);
    const Matrix y = label_matrix(train);
    const Matrix xdev = feature_matrix(dev);
    const auto g = genders_of(train);
    const auto gdev = genders_of(dev);
    const LossKind kind = task_loss_kind(train);
    const int width = static_cast<int>(x.cols());
    const std::size_t batch = effective_batch(train.size(), c.batch_size) / 2 * 2;
    const std::size_t per_epoch = std::max<std::size_t>(1, train.size() / batch);

    DebiasResult r;
    MlpModel gen = make_mlp(width, c.mask_hidden_dim, 1, width, c.predictor.negative_slope);
    gen.initialize(derive_seed(c.seed, "debias/mask_init"));
    gen.lineage() = "debias/mask";
    r.predictor = make_mlp(width, c.predictor.hidden_dim, c.predictor.blocks, static_cast<int>(y.cols()),
                           c.predictor.negative_slope);
    r.predictor.initialize(derive_seed(c.seed, "debias/masked_predictor_init"));
    r.predictor.lineage() = "debias/masked_predictor";
    r.critic = make_critic(width, c, c.seed);
    r.tap_index = 0;
    AdamState gadam(gen.params().size(), c.predictor.lr);
    AdamState padam(r.predictor.params().size(), c.predictor.lr);
    AdamState cadam(r.critic.params().size(), c.critic_lr);
    BalancedBatcher critic_batches(g, derive_seed(c.seed, "debias/critic_batches"));
    BalancedBatcher predictor_batches(g, derive_seed(c.seed, "debias/predictor_batches"));
    long step = 0;

    auto masked = [&](const Matrix& in) -> Matrix { return (sigmoid(predict(gen, in)).array() * in.array()).matrix(); };

    // joint generator + predictor step on beta * recon + task - lambda * adv
    auto joint_step = [&](std::span<const std::size_t> rows, double lambda, Steps& s) {
        const Matrix xb = gather_rows(x, rows);
        const ForwardTrace gt = forward(gen, xb, Mode::train);
        const Matrix m = sigmoid(gt.output());
        const Matrix xh = (m.array() * xb.array()).matrix();
        const ForwardTrace pt = forward(r.predictor, xh, Mode::train);
        const LossValue task = evaluate_loss(kind, pt.output(), task_targets(train, rows, y));
        const Gradients pg = backward(r.predictor, pt, task.grad);
        const double count = static_cast<double>(xb.size());
        const double recon = (xb - xh).cwiseAbs().sum() / count;
        Matrix dxh = pg.input;
        // d|x - xh|/dxh = -sign(x - xh)
        dxh -= (c.beta_recon / count) * (xb - xh).unaryExpr([](double v) { return double((v > 0) - (v < 0)); });
        double adv_value = 0.0;
        if (lambda > 0.0) {
            const ForwardTrace ct = forward(r.critic, xh, Mode::eval);
            const LossValue adv = softmax_cross_entropy(ct.output(), gender_classes(g, rows));
            dxh -= lambda * backward(r.critic, ct, adv.grad).input;
            adv_value = adv.value;
        }
        const Matrix dz = (dxh.array() * xb.array() * m.array() * (1.0 - m.array())).matrix();
        const Gradients gg = backward(gen, gt, dz);
        const double total = task.value + c.beta_recon * recon - lambda * adv_value;
        check_finite(total, step++);
        update_running_stats(gen, gt);
        update_running_stats(r.predictor, pt);
        adam_step(gen.params(), gg.params, gadam);
        adam_step(r.predictor.params(), pg.params, padam);
        s.add(task.value, adv_value, recon, total);
    };

    auto dev_eval = [&](EpochTrace& e) {
        const Matrix xh = masked(xdev);
        e.dev_f1 = f1(predict(r.predictor, xh), dev);
        e.critic_dev_accuracy = critic_accuracy(r.critic, xh, gdev);
    };

    // phase 1: generator + predictor on the task (and reconstruction), no critic
    for (int epoch = 0; epoch < c.predictor.max_epochs; ++epoch) {
        Steps s;
        for (const auto& rows : epoch_batches(train.size(), c.predictor.batch_size,
                                              derive_seed(c.seed, "debias/masked_epoch", static_cast<std::uint64_t>(epoch))))
            joint_step(rows, 0.0, s);
    }
    padam = AdamState(r.predictor.params().size(), c.predictor_lr);
    gadam = AdamState(gen.params().size(), c.mask_lr);

    for (int epoch = 0; epoch < c.critic_warmup_epochs; ++epoch) {
        const Matrix xh = masked(x);
        Steps s;
        for (std::size_t b = 0; b < per_epoch; ++b) {
            const double loss = critic_step(r.critic, cadam, xh, g, critic_batches.next(batch));
            check_finite(loss, step++);
            s.add(0.0, loss, 0.0, 0.0);
        }
        EpochTrace e;
        e.epoch = epoch + 1;
        e.phase = "warmup";
        s.write(e);
        dev_eval(e);
        r.trace.push_back(e);
    }
    r.warmup_critic_accuracy = critic_accuracy(r.critic, masked(xdev), gdev);
    if (c.lambda_adv > 0.0 && c.critic_warmup_epochs > 0 && c.reference_leakage && *c.reference_leakage > 60.0 &&
        r.warmup_critic_accuracy < 55.0)
        throw DebiasError("critic too weak after warmup on masked inputs");

    for (int epoch = 0; epoch < c.adv_epochs; ++epoch) {
        Steps s;
        for (std::size_t b = 0; b < per_epoch; ++b) {
            for (int k = 0; k < c.critic_steps; ++k) {
                const auto rows = critic_batches.next(batch);
                const Matrix xh = masked(gather_rows(x, rows));
                std::vector<std::size_t> local(rows.size());
                std::iota(local.begin(), local.end(), std::size_t{0});
                std::vector<Gender> lg;
                for (auto i : rows) lg.push_back(g[i]);
                check_finite(critic_step(r.critic, cadam, xh, lg, local), step++);
            }
            joint_step(predictor_batches.next(batch), c.lambda_adv, s);
        }
        EpochTrace e;
        e.epoch = epoch + 1;
        e.phase = "adversarial";
        s.write(e);
        dev_eval(e);
        r.trace.push_back(e);
    }

    gen.set_mode(Mode::eval);
    r.predictor.set_mode(Mode::eval);
    r.critic.set_mode(Mode::eval);
    const Matrix m = sigmoid(predict(gen, x));
    const Vector mean = m.colwise().mean().transpose();
    r.mean_mask.assign(mean.data(), mean.data() + mean.size());
    r.mask_generator = std::move(gen);
    r.selected_epoch = c.adv_epochs;
    return r;
}

Matrix predict_logits(const DebiasResult& r, const Matrix& features) {
    if (!r.mask_generator) return predict(r.predictor, features);
    const Matrix m = sigmoid(predict(*r.mask_generator, features));
    return predict(r.predictor, (m.array() * features.array()).matrix());
}

Predictions predict_dataset(const MlpModel& model, const Dataset& dataset) {
    return make_predictions(dataset, predict(model, feature_matrix(dataset)));
}

Predictions predict_dataset(const DebiasResult& result, const Dataset& dataset) {
    return make_predictions(dataset, predict_logits(result, feature_matrix(dataset)));
}

std::vector<NoisePoint> noise_sweep(const MlpModel& model, const Dataset& audit, std::span<const double> sigmas,
                                    const AttackerConfig& attacker, std::uint64_t seed) {
    for (std::size_t k = 0; k < sigmas.size(); ++k)
        if (!(sigmas[k] >= 0.0) || (k && sigmas[k] < sigmas[k - 1]))
            throw std::invalid_argument("noise sigmas must be non-negative and ascending");
    const auto& layers = model.layers();
    if (layers.back().kind != LayerKind::linear) throw std::invalid_argument("noise_sweep needs a linear head");

    MlpModel head({layers.back()});
    const std::size_t off = model.param_offset(layers.size() - 1);
    std::copy(model.params().begin() + static_cast<std::ptrdiff_t>(off), model.params().end(), head.params().begin());
    head.set_mode(Mode::eval);

    const Matrix emb = representations(model, feature_matrix(audit), layers.size() - 1);
    const Eigen::RowVectorXd mean = emb.colwise().mean();
    const Eigen::RowVectorXd sd = ((emb.rowwise() - mean).array().square().colwise().mean()).sqrt().matrix();
    Matrix z(emb.rows(), emb.cols());
    Rng rng(derive_seed(seed, "noise"));
    std::normal_distribution<double> normal;
    for (Eigen::Index i = 0; i < z.rows(); ++i)
        for (Eigen::Index j = 0; j < z.cols(); ++j) z(i, j) = normal(rng);

    const AuditSplit split = make_audit_split(audit, seed);
    std::vector<NoisePoint> out;
    for (double sigma : sigmas) {
        const Matrix noisy = emb + sigma * (z.array().rowwise() * sd.array()).matrix();
        const Predictions p = make_predictions(audit, predict(head, noisy));
        const ModelAudit m = audit_model(split, p, attacker, seed);
        out.push_back({sigma, f1(p, audit), m.lambda_M});
    }
    return out;
}

AblationMode ablation_mode_from_string(const std::string& name) {
    if (name == "zero") return AblationMode::zero;
    if (name == "noise") return AblationMode::noise;
    throw std::invalid_argument("unknown ablation mode '" + name + "'");
}

Dataset feature_ablation(const Dataset& dataset, std::span<const int> dims, AblationMode mode, std::uint64_t seed) {
    if (dims.empty()) {
        std::clog << "warning: feature ablation with no dims leaves the dataset unchanged\n";
        return dataset;
    }
    const Matrix x = feature_matrix(dataset);
    for (int d : dims)
        if (d < 0 || d >= x.cols()) throw std::invalid_argument("ablation dim " + std::to_string(d) + " outside feature width");
    Dataset out = dataset;
    Rng rng(derive_seed(seed, "ablation"));
    for (int d : dims) {
        const double mean = x.col(d).mean();
        const double sd = std::sqrt((x.col(d).array() - mean).square().mean());
        std::normal_distribution<double> normal(mean, sd > 0.0 ? sd : 1e-300);
        for (auto& e : out.examples) (*e.features)[static_cast<std::size_t>(d)] = mode == AblationMode::zero ? 0.0 : normal(rng);
    }
    return out;
}

nlohmann::ordered_json debias_config_json(const DebiasConfig& c) {
    nlohmann::ordered_json j;
    j["tap"] = to_string(c.tap);
    j["tap_mapping"] = "embedding = last hidden block output (pre-logit); hidden = middle hidden block output";
    j["lambda_adv"] = c.lambda_adv;
    j["beta_recon"] = c.beta_recon;
    j["critic_warmup_epochs"] = c.critic_warmup_epochs;
    j["critic_steps"] = c.critic_steps;
    j["adv_epochs"] = c.adv_epochs;
    j["adv_epoch_budget_note"] = "fixed adversarial epoch budget; no convergence criterion; last epoch selected";
    j["predictor_lr"] = c.predictor_lr;
    j["critic_lr"] = c.critic_lr;
    j["critic"] = {{"hidden_dim", c.critic_hidden_dim}, {"blocks", c.critic_blocks}};
    j["mask_hidden_dim"] = c.mask_hidden_dim;
    j["mask_lr"] = c.mask_lr;
    j["batch_size"] = c.batch_size;
    j["predictor"] = {{"hidden_dim", c.predictor.hidden_dim}, {"blocks", c.predictor.blocks},
                      {"lr", c.predictor.lr},             {"batch_size", c.predictor.batch_size},
                      {"max_epochs", c.predictor.max_epochs}, {"patience", c.predictor.patience}};
    j["seed"] = c.seed;
    return j;
}

nlohmann::ordered_json trace_json(const std::vector<EpochTrace>& trace) {
    nlohmann::ordered_json out = nlohmann::ordered_json::array();
    for (const auto& e : trace)
        out.push_back({{"epoch", e.epoch},
                       {"phase", e.phase},
                       {"task_loss", e.task_loss},
                       {"adv_loss", e.adv_loss},
                       {"recon_loss", e.recon_loss},
                       {"total_loss", e.total_loss},
                       {"dev_f1", e.dev_f1},
                       {"critic_dev_accuracy", e.critic_dev_accuracy}});
    return out;
}

}  // namespace leakaudit
