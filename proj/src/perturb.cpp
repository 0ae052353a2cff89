#include "leakaudit/perturb.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace leakaudit {

namespace {

constexpr int kMaxRedraws = 200;

Matrix concat_rows(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() + b.rows(), a.cols());
    out.topRows(a.rows()) = a;
    out.bottomRows(b.rows()) = b;
    return out;
}

double mean_probe_f1(const Matrix& gold, TaskKind kind, double p, std::uint64_t seed, F1Kind metric) {
    double total = 0.0;
    for (int k = 0; k < kPerturbProbeDraws; ++k)
        total += f1_score(perturb_labels(gold, kind, p, derive_seed(seed, "probe", static_cast<std::uint64_t>(k))), gold,
                          metric);
    return total / kPerturbProbeDraws;
}

}  // namespace

Matrix perturb_labels(const Matrix& gold, TaskKind kind, double p, std::uint64_t seed) {
    if (!(p >= 0.0 && p <= max_flip_prob(kind))) throw std::invalid_argument("flip probability out of range");
    Rng rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Matrix out = gold;
    if (kind == TaskKind::multi_label) {
        for (Eigen::Index i = 0; i < out.rows(); ++i)
            for (Eigen::Index c = 0; c < out.cols(); ++c)
                if (u(rng) < p) out(i, c) = 1.0 - out(i, c);
        return out;
    }
    if (gold.cols() < 2) throw std::invalid_argument("multi_class perturbation needs >= 2 labels");
    std::uniform_int_distribution<Eigen::Index> other(0, gold.cols() - 2);
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        const double draw = u(rng);
        Eigen::Index replacement = other(rng);
        Eigen::Index current;
        gold.row(i).maxCoeff(&current);
        if (replacement >= current) ++replacement;
        if (draw < p) {
            out.row(i).setZero();
            out(i, replacement) = 1.0;
        }
    }
    return out;
}

double max_flip_prob(TaskKind kind) { return kind == TaskKind::multi_label ? 0.5 : 1.0; }

double perturbation_floor(const Matrix& gold, TaskKind kind, std::uint64_t seed, F1Kind metric) {
    return mean_probe_f1(gold, kind, max_flip_prob(kind), seed, metric);
}

double solve_flip_prob(const Matrix& gold, TaskKind kind, double target, std::uint64_t seed, F1Kind metric) {
    if (target >= 1.0) return 0.0;
    double lo = 0.0, hi = max_flip_prob(kind);
    for (int it = 0; it < 60 && hi - lo > 1e-12; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mean_probe_f1(gold, kind, mid, seed, metric) > target) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

PerturbResult perturb_to_f1(const Matrix& gold, TaskKind kind, double target, double tolerance, std::uint64_t seed,
                            F1Kind metric) {
    if (gold.rows() == 0) throw std::invalid_argument("perturb_to_f1: no labels");
    if (!(tolerance >= 0.005)) throw std::invalid_argument("perturb_to_f1: tolerance must be >= 0.005");
    if (!(target <= 1.0)) throw std::invalid_argument("perturb_to_f1: target F1 above 1");
    PerturbResult r;
    r.target_f1 = target;
    r.tolerance = tolerance;
    r.seed = seed;
    if (target == 1.0) {
        r.labels = gold;
        r.flip_prob = 0.0;
        r.achieved_f1 = 1.0;
        return r;
    }
    const double floor = perturbation_floor(gold, kind, seed, metric);
    if (!(target > floor)) {
        std::ostringstream os;
        os << "target F1 " << target << " is at or below the perturbation floor " << floor;
        throw std::domain_error(os.str());
    }
    r.flip_prob = solve_flip_prob(gold, kind, target, seed, metric);
    for (int attempt = 0; attempt < kMaxRedraws; ++attempt) {
        const std::uint64_t s = derive_seed(seed, "draw", static_cast<std::uint64_t>(attempt));
        Matrix labels = perturb_labels(gold, kind, r.flip_prob, s);
        const double f = f1_score(labels, gold, metric);
        if (std::abs(f - target) <= tolerance) {
            r.labels = std::move(labels);
            r.achieved_f1 = f;
            r.draw_seed = s;
            return r;
        }
    }
    throw std::domain_error("no perturbation within tolerance of the target F1 (too few labels for this tolerance)");
}

PerturbResult perturb_to_f1(const Dataset& dataset, double target, double tolerance, std::uint64_t seed,
                            F1Kind metric) {
    return perturb_to_f1(label_matrix(dataset), dataset.schema.task_kind, target, tolerance, seed, metric);
}

AttackSources LabelSources::as_attack_sources() const {
    return {train_labels, train_genders, eval_labels, eval_genders};
}

double AdjustedLeakage::mean_achieved_f1() const {
    if (achieved_f1.empty()) return 1.0;
    return std::accumulate(achieved_f1.begin(), achieved_f1.end(), 0.0) / static_cast<double>(achieved_f1.size());
}

AdjustedLeakage leakage_at_f1(const LabelSources& sources, double target, const AttackerConfig& config,
                              std::uint64_t master_seed, double tolerance, F1Kind metric) {
    validate(config);
    AdjustedLeakage out;
    out.target_f1 = target;
    out.metric = metric;
    const Matrix all = concat_rows(sources.train_labels, sources.eval_labels);
    const std::uint64_t perturb_seed = derive_seed(master_seed, "perturb");
    out.flip_prob = target >= 1.0 ? 0.0 : solve_flip_prob(all, sources.task_kind, target, perturb_seed, metric);
    if (target < 1.0) {
        const double floor = perturbation_floor(all, sources.task_kind, perturb_seed, metric);
        if (!(target > floor)) {
            std::ostringstream os;
            os << "target F1 " << target << " is at or below the perturbation floor " << floor;
            throw std::domain_error(os.str());
        }
    }

    AttackSources s = sources.as_attack_sources();
    const PoolSizes pools = resolve_pools(s, config);
    std::vector<double> acc;
    std::vector<int> epochs;
    for (int r = 0; r < config.rounds; ++r) {
        if (target < 1.0) {
            Matrix labels;
            double f = 0.0;
            bool ok = false;
            for (int attempt = 0; attempt < kMaxRedraws && !ok; ++attempt) {
                const std::uint64_t draw_seed =
                    derive_seed(perturb_seed, "round", static_cast<std::uint64_t>(r) * kMaxRedraws + attempt);
                labels = perturb_labels(all, sources.task_kind, out.flip_prob, draw_seed);
                f = f1_score(labels, all, metric);
                ok = std::abs(f - target) <= tolerance;
            }
            if (!ok) throw std::domain_error("no perturbation within tolerance of the target F1");
            s.train_inputs = labels.topRows(sources.train_labels.rows());
            s.eval_inputs = labels.bottomRows(sources.eval_labels.rows());
            out.achieved_f1.push_back(f);
        } else {
            out.achieved_f1.push_back(1.0);
        }
        const RoundResult rr = run_attack_round(s, config, round_seed(master_seed, r));
        acc.push_back(rr.test_accuracy);
        epochs.push_back(rr.best_epoch);
    }
    out.leakage = LeakageEstimate::from_rounds(std::move(acc));
    out.leakage.best_epochs = std::move(epochs);
    out.leakage.config = config;
    out.leakage.pools = pools;
    return out;
}

std::vector<CurvePoint> leakage_vs_f1_curve(const LabelSources& sources, std::span<const double> grid,
                                            const AttackerConfig& config, std::uint64_t master_seed,
                                            double tolerance, F1Kind metric) {
    std::vector<CurvePoint> out;
    for (double target : grid)
        out.push_back({target, leakage_at_f1(sources, target, config, master_seed, tolerance, metric)});
    return out;
}

}  // namespace leakaudit
