#include "leakaudit/attacker.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace leakaudit {

std::string to_string(InputKind kind) { return kind == InputKind::logits ? "logits" : "binary_labels"; }

InputKind input_kind_from_string(const std::string& name) {
    if (name == "logits") return InputKind::logits;
    if (name == "binary_labels") return InputKind::binary_labels;
    throw std::invalid_argument("unknown input_kind '" + name + "'");
}

int attacker_blocks(int n_layers) { return n_layers == 1 ? 0 : n_layers; }

void validate(const AttackerConfig& c) {
    auto require = [](bool ok, const char* what) {
        if (!ok) throw std::invalid_argument(std::string("attacker config: ") + what);
    };
    require(c.n_layers >= 1, "n_layers must be >= 1");
    require(c.hidden_dim >= 1, "hidden_dim must be >= 1");
    require(c.epochs >= 1, "epochs must be >= 1");
    require(c.lr > 0.0, "lr must be positive");
    require(c.batch_size >= 2 && c.batch_size % 2 == 0, "batch_size must be even and >= 2");
    require(c.rounds >= 1, "rounds must be >= 1");
    require(c.train_n_per_gender >= 1 && c.eval_n_per_gender >= 1, "pool sizes must be >= 1");
    require(c.data_fraction > 0.0 && c.data_fraction <= 1.0, "data_fraction must lie in (0, 1]");
}

Standardizer Standardizer::identity(int width) {
    return {Vector::Zero(width), Vector::Ones(width)};
}

Standardizer Standardizer::fit(const Matrix& x) {
    Standardizer s;
    s.mean = x.colwise().mean().transpose();
    s.scale.resize(x.cols());
    const double n = static_cast<double>(x.rows());
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        const double var = (x.col(c).array() - s.mean[c]).square().sum() / std::max(n - 1.0, 1.0);
        const double sd = std::sqrt(var);
        s.scale[c] = sd > 1e-12 ? sd : 1.0;
    }
    return s;
}

Matrix Standardizer::apply(const Matrix& x) const {
    if (x.cols() != mean.size()) throw std::invalid_argument("standardizer width mismatch");
    return (x.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
}

double gender_accuracy(const MlpModel& model, const Matrix& inputs, std::span<const Gender> genders) {
    if (static_cast<std::size_t>(inputs.rows()) != genders.size())
        throw std::invalid_argument("gender_accuracy: row count mismatch");
    const Matrix out = predict(model, inputs);
    std::size_t correct = 0;
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        const Gender guess = out(i, 1) > out(i, 0) ? Gender::W : Gender::M;
        correct += guess == genders[static_cast<std::size_t>(i)];
    }
    return static_cast<double>(correct) / static_cast<double>(genders.size());
}

AttackerModel train_attacker(const Matrix& train_inputs, std::span<const Gender> train_genders,
                             const Matrix& dev_inputs, std::span<const Gender> dev_genders,
                             const AttackerConfig& config, std::uint64_t seed) {
    validate(config);
    if (train_inputs.rows() == 0 || dev_inputs.rows() == 0) throw std::invalid_argument("attacker: empty pool");
    if (static_cast<std::size_t>(train_inputs.rows()) != train_genders.size() ||
        static_cast<std::size_t>(dev_inputs.rows()) != dev_genders.size())
        throw std::invalid_argument("attacker: inputs and genders differ in length");
    if (dev_inputs.cols() != train_inputs.cols())
        throw std::invalid_argument("attacker: input width mismatch between train (" +
                                    std::to_string(train_inputs.cols()) + ") and dev (" +
                                    std::to_string(dev_inputs.cols()) + ")");

    std::array<std::vector<std::size_t>, kGenderCount> by;
    for (std::size_t i = 0; i < train_genders.size(); ++i)
        by[static_cast<std::size_t>(index_of(train_genders[i]))].push_back(i);
    if (by[0].empty() || by[1].empty()) throw std::invalid_argument("attacker: training pool lacks a gender");

    AttackerModel out;
    out.standardizer = config.input_kind == InputKind::logits ? Standardizer::fit(train_inputs)
                                                              : Standardizer::identity(static_cast<int>(train_inputs.cols()));
    const Matrix x = out.standardizer.apply(train_inputs);
    const Matrix xdev = out.standardizer.apply(dev_inputs);

    MlpModel model = make_mlp(static_cast<int>(x.cols()), config.hidden_dim, attacker_blocks(config.n_layers), 2,
                              config.negative_slope);
    model.initialize(derive_seed(seed, "init"));
    AdamState adam(model.params().size(), config.lr);
    Rng rng(derive_seed(seed, "batches"));

    const std::size_t half = static_cast<std::size_t>(config.batch_size / 2);
    const std::size_t per_gender = std::min(by[0].size(), by[1].size());
    const std::size_t batches = std::max<std::size_t>(1, (by[0].size() + by[1].size()) / static_cast<std::size_t>(config.batch_size));
    const std::size_t take = std::min(half, per_gender);

    std::vector<std::size_t> rows;
    LossTargets targets;
    out.best_dev_accuracy = -1.0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        for (auto& g : by) std::shuffle(g.begin(), g.end(), rng);
        std::array<std::size_t, kGenderCount> cursor{0, 0};
        model.set_mode(Mode::train);
        for (std::size_t b = 0; b < batches; ++b) {
            rows.clear();
            targets.classes.clear();
            for (int g = 0; g < kGenderCount; ++g) {
                auto& pool = by[static_cast<std::size_t>(g)];
                for (std::size_t k = 0; k < take; ++k) {
                    if (cursor[static_cast<std::size_t>(g)] == pool.size()) {
                        std::shuffle(pool.begin(), pool.end(), rng);
                        cursor[static_cast<std::size_t>(g)] = 0;
                    }
                    rows.push_back(pool[cursor[static_cast<std::size_t>(g)]++]);
                    targets.classes.push_back(g);
                }
            }
            if (rows.size() < 2) continue;
            train_step(model, adam, gather_rows(x, rows), LossKind::softmax_ce, targets);
        }
        model.set_mode(Mode::eval);
        const double acc = gender_accuracy(model, xdev, dev_genders);
        if (acc > out.best_dev_accuracy) {
            out.best_dev_accuracy = acc;
            out.best_epoch = epoch;
            out.model = model;
        }
    }
    return out;
}

PoolSizes resolve_pools(const AttackSources& s, const AttackerConfig& config) {
    auto counts = [](std::span<const Gender> g) {
        std::array<std::size_t, kGenderCount> c{0, 0};
        for (Gender v : g) ++c[static_cast<std::size_t>(index_of(v))];
        return std::min(c[0], c[1]);
    };
    const double train_have = static_cast<double>(counts(s.train_genders));
    const double eval_have = static_cast<double>(counts(s.eval_genders));
    const double train_want = config.train_n_per_gender;
    const double eval_want = 2.0 * config.eval_n_per_gender;
    const double scale = std::min({1.0, train_have / train_want, eval_have / eval_want});
    PoolSizes p;
    p.scale = scale;
    if (scale < 1.0) {
        if (!config.scale_pools)
            throw std::invalid_argument("attacker pools need " + std::to_string(config.train_n_per_gender) +
                                        " train and " + std::to_string(2 * config.eval_n_per_gender) +
                                        " held-out examples per gender; sources have " +
                                        std::to_string(static_cast<long>(train_have)) + " and " +
                                        std::to_string(static_cast<long>(eval_have)));
        p.train_n_per_gender = static_cast<int>(std::floor(train_want * scale));
        p.eval_n_per_gender = static_cast<int>(std::floor(config.eval_n_per_gender * scale));
        if (p.train_n_per_gender < 10 || p.eval_n_per_gender < 10)
            throw std::invalid_argument("attacker pools too small after scaling (train " +
                                        std::to_string(p.train_n_per_gender) + ", eval " +
                                        std::to_string(p.eval_n_per_gender) + " per gender)");
    } else {
        p.train_n_per_gender = config.train_n_per_gender;
        p.eval_n_per_gender = config.eval_n_per_gender;
    }
    return p;
}

RoundResult run_attack_round(const AttackSources& s, const AttackerConfig& config, std::uint64_t seed) {
    validate(config);
    if (s.train_inputs.cols() != s.eval_inputs.cols())
        throw std::invalid_argument("attacker: train and eval inputs differ in width");
    const PoolSizes pools = resolve_pools(s, config);

    Rng pool_rng(derive_seed(seed, "pools"));
    std::vector<std::size_t> train_rows = balanced_indices(s.train_genders, static_cast<std::size_t>(pools.train_n_per_gender), pool_rng);
    const std::vector<std::size_t> held = balanced_indices(s.eval_genders, 2 * static_cast<std::size_t>(pools.eval_n_per_gender), pool_rng);

    // dev/test halves, each balanced
    std::array<std::vector<std::size_t>, kGenderCount> held_by;
    for (std::size_t r : held) held_by[static_cast<std::size_t>(index_of(s.eval_genders[r]))].push_back(r);
    std::vector<std::size_t> dev_rows, test_rows;
    for (auto& g : held_by) {
        std::shuffle(g.begin(), g.end(), pool_rng);
        const auto mid = g.begin() + pools.eval_n_per_gender;
        dev_rows.insert(dev_rows.end(), g.begin(), mid);
        test_rows.insert(test_rows.end(), mid, g.end());
    }

    if (config.data_fraction < 1.0) {
        std::array<std::vector<std::size_t>, kGenderCount> tr_by;
        for (std::size_t r : train_rows) tr_by[static_cast<std::size_t>(index_of(s.train_genders[r]))].push_back(r);
        const auto keep = static_cast<std::size_t>(std::max(1.0, std::round(pools.train_n_per_gender * config.data_fraction)));
        train_rows.clear();
        Rng frac_rng(derive_seed(seed, "fraction"));
        for (auto& g : tr_by) {
            auto picked = sample_without_replacement(g, keep, frac_rng);
            train_rows.insert(train_rows.end(), picked.begin(), picked.end());
        }
    }

    auto genders_at = [](const std::vector<Gender>& all, const std::vector<std::size_t>& rows) {
        std::vector<Gender> g;
        g.reserve(rows.size());
        for (std::size_t r : rows) g.push_back(all[r]);
        return g;
    };
    const auto tr_g = genders_at(s.train_genders, train_rows);
    const auto dev_g = genders_at(s.eval_genders, dev_rows);
    const auto test_g = genders_at(s.eval_genders, test_rows);

    const AttackerModel a = train_attacker(gather_rows(s.train_inputs, train_rows), tr_g,
                                           gather_rows(s.eval_inputs, dev_rows), dev_g, config,
                                           derive_seed(seed, "train"));
    RoundResult r;
    r.dev_accuracy = 100.0 * a.best_dev_accuracy;
    r.best_epoch = a.best_epoch;
    r.test_accuracy = 100.0 * gender_accuracy(a.model, a.standardizer.apply(gather_rows(s.eval_inputs, test_rows)), test_g);
    return r;
}

LeakageEstimate LeakageEstimate::from_rounds(std::vector<double> rounds) {
    LeakageEstimate e;
    e.per_round = std::move(rounds);
    if (e.per_round.empty()) return e;
    const double n = static_cast<double>(e.per_round.size());
    e.mean = std::accumulate(e.per_round.begin(), e.per_round.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : e.per_round) ss += (v - e.mean) * (v - e.mean);
    e.std = std::sqrt(ss / n);
    return e;
}

std::uint64_t round_seed(std::uint64_t master_seed, int round) {
    return derive_seed(master_seed, "attacker/round", static_cast<std::uint64_t>(round));
}

LeakageEstimate estimate_leakage(const AttackSources& sources, const AttackerConfig& config, std::uint64_t master_seed) {
    validate(config);
    const PoolSizes pools = resolve_pools(sources, config);
    std::vector<double> acc;
    std::vector<int> epochs;
    for (int r = 0; r < config.rounds; ++r) {
        const RoundResult rr = run_attack_round(sources, config, round_seed(master_seed, r));
        acc.push_back(rr.test_accuracy);
        epochs.push_back(rr.best_epoch);
    }
    LeakageEstimate e = LeakageEstimate::from_rounds(std::move(acc));
    e.best_epochs = std::move(epochs);
    e.config = config;
    e.pools = pools;
    return e;
}

std::vector<VariantEstimate> robustness_ablation(const AttackSources& sources, const AttackerConfig& base,
                                                 std::span<const AttackerVariant> grid, std::uint64_t master_seed) {
    std::vector<VariantEstimate> out;
    for (const auto& v : grid) {
        AttackerConfig c = base;
        c.n_layers = v.n_layers;
        c.hidden_dim = v.hidden_dim;
        c.data_fraction = v.data_fraction;
        out.push_back({v, estimate_leakage(sources, c, master_seed)});
    }
    return out;
}

std::vector<AttackerVariant> default_ablation_grid() {
    return {{1, 300, 1.0}, {2, 100, 1.0}, {2, 300, 1.0}, {4, 300, 1.0},
            {4, 300, 0.75}, {4, 300, 0.5}, {4, 300, 0.25}};
}

}  // namespace leakaudit
