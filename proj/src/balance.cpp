#include "leakaudit/balance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace leakaudit {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_alpha(double alpha) {
    if (!(alpha >= 1.0) || !std::isfinite(alpha)) throw std::invalid_argument("alpha must be a finite value >= 1");
}

std::vector<int> infeasible_labels(const CooccurrenceTable& t) {
    std::vector<int> out;
    for (std::size_t l = 0; l < t.label_count(); ++l)
        if ((t.count_m[l] == 0) != (t.count_w[l] == 0)) out.push_back(static_cast<int>(l));
    return out;
}

std::vector<int> handle_infeasible(const Dataset& d, const CooccurrenceTable& t, bool drop) {
    std::vector<int> bad = infeasible_labels(t);
    if (!bad.empty() && !drop) {
        std::ostringstream os;
        os << "labels seen with one gender only cannot satisfy any alpha:";
        for (int l : bad) os << ' ' << d.schema.labels[static_cast<std::size_t>(l)];
        os << " (use --drop-infeasible)";
        throw std::invalid_argument(os.str());
    }
    return bad;
}

BalanceResult finish(const Dataset& d, const std::vector<bool>& keep, const BalanceOptions& o,
                     std::vector<int> dropped) {
    BalanceResult r;
    r.alpha = o.alpha;
    for (std::size_t i = 0; i < d.size(); ++i) {
        (keep[i] ? r.retained : r.removed).push_back(i);
        (keep[i] ? r.retained_ids : r.removed_ids).push_back(d.examples[i].id);
    }
    r.table = cooccurrence(subset(d, r.retained));
    r.dropped_labels = std::move(dropped);
    r.achieved_alpha = achieved_alpha(r.table, r.dropped_labels);
    return r;
}

}  // namespace

double label_ratio(long m, long w) {
    if (m == 0 && w == 0) return 1.0;
    if (m == 0 || w == 0) return kInf;
    return std::max(static_cast<double>(m) / static_cast<double>(w), static_cast<double>(w) / static_cast<double>(m));
}

bool satisfies_alpha(long m, long w, double alpha) {
    if (m == 0 && w == 0) return true;
    if (alpha == 1.0) return m == w;
    return static_cast<double>(m) < alpha * static_cast<double>(w) &&
           static_cast<double>(w) < alpha * static_cast<double>(m);
}

long max_allowed(long under, double alpha) {
    check_alpha(alpha);
    if (alpha == 1.0 || under == 0) return under;
    auto n = static_cast<long>(std::ceil(alpha * static_cast<double>(under))) - 1;
    while (!(static_cast<double>(n) < alpha * static_cast<double>(under))) --n;
    while (static_cast<double>(n + 1) < alpha * static_cast<double>(under)) ++n;
    return n;
}

double achieved_alpha(const CooccurrenceTable& t, std::span<const int> ignored) {
    double worst = 1.0;
    for (std::size_t l = 0; l < t.label_count(); ++l) {
        if (std::find(ignored.begin(), ignored.end(), static_cast<int>(l)) != ignored.end()) continue;
        worst = std::max(worst, label_ratio(t.count_m[l], t.count_w[l]));
    }
    return worst;
}

double achieved_alpha(const Dataset& dataset) { return achieved_alpha(cooccurrence(dataset)); }

BalanceResult balance_single_label(const Dataset& d, const BalanceOptions& o) {
    check_alpha(o.alpha);
    if (d.schema.task_kind != TaskKind::multi_class) throw std::invalid_argument("balance_single_label needs multi_class data");
    const CooccurrenceTable t = cooccurrence(d);
    const std::vector<int> dropped = handle_infeasible(d, t, o.drop_infeasible);

    std::vector<bool> keep(d.size(), true);
    const auto L = static_cast<std::size_t>(d.schema.label_count());
    std::vector<std::array<std::vector<std::size_t>, kGenderCount>> members(L);
    for (std::size_t i = 0; i < d.size(); ++i)
        members[static_cast<std::size_t>(d.examples[i].labels.at(0))][static_cast<std::size_t>(index_of(d.examples[i].gender))]
            .push_back(i);

    for (std::size_t l = 0; l < L; ++l) {
        auto& [ms, ws] = members[l];
        if (std::find(dropped.begin(), dropped.end(), static_cast<int>(l)) != dropped.end()) {
            for (auto i : ms) keep[i] = false;
            for (auto i : ws) keep[i] = false;
            continue;
        }
        auto& over = ms.size() >= ws.size() ? ms : ws;
        const auto under = static_cast<long>(ms.size() >= ws.size() ? ws.size() : ms.size());
        const auto allowed = static_cast<std::size_t>(max_allowed(under, o.alpha));
        if (over.size() <= allowed) continue;
        Rng rng(derive_seed(o.seed, "balance/label", l));
        std::shuffle(over.begin(), over.end(), rng);
        for (std::size_t k = allowed; k < over.size(); ++k) keep[over[k]] = false;
    }

    BalanceResult r = finish(d, keep, o, dropped);
    r.iterations = 1;
    for (std::size_t l = 0; l < L; ++l)
        if (std::find(dropped.begin(), dropped.end(), static_cast<int>(l)) == dropped.end() &&
            !satisfies_alpha(r.table.count_m[l], r.table.count_w[l], o.alpha))
            throw std::logic_error("single-label balancing left a label violating alpha");
    return r;
}

BalanceResult balance_multi_label(const Dataset& d, const BalanceOptions& o) {
    check_alpha(o.alpha);
    if (o.max_iters < 1) throw std::invalid_argument("max_iters must be >= 1");
    if (d.schema.task_kind != TaskKind::multi_label) throw std::invalid_argument("balance_multi_label needs multi_label data");
    CooccurrenceTable t = cooccurrence(d);
    const std::vector<int> dropped = handle_infeasible(d, t, o.drop_infeasible);
    const auto L = static_cast<std::size_t>(d.schema.label_count());
    std::vector<bool> active(L, true);
    for (int l : dropped) active[static_cast<std::size_t>(l)] = false;

    std::vector<std::vector<std::size_t>> carriers(L);
    for (std::size_t i = 0; i < d.size(); ++i)
        for (int l : d.examples[i].labels) carriers[static_cast<std::size_t>(l)].push_back(i);

    std::vector<bool> keep(d.size(), true);
    auto count = [&](std::size_t l, int g) -> long& { return g == 0 ? t.count_m[l] : t.count_w[l]; };
    auto remove = [&](std::size_t i) {
        keep[i] = false;
        const int g = index_of(d.examples[i].gender);
        for (int l : d.examples[i].labels) --count(static_cast<std::size_t>(l), g);
    };

    int iterations = 0;
    bool converged = false;
    while (iterations < o.max_iters) {
        ++iterations;
        std::vector<std::size_t> order;
        for (std::size_t l = 0; l < L; ++l)
            if (active[l]) order.push_back(l);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return label_ratio(t.count_m[a], t.count_w[a]) > label_ratio(t.count_m[b], t.count_w[b]);
        });
        bool removed_any = false;
        for (std::size_t l : order) {
            if (satisfies_alpha(t.count_m[l], t.count_w[l], o.alpha)) continue;
            const int over = t.count_m[l] >= t.count_w[l] ? 0 : 1;
            const long allowed = max_allowed(count(l, 1 - over), o.alpha);
            std::vector<std::size_t> cand;
            for (auto i : carriers[l])
                if (keep[i] && index_of(d.examples[i].gender) == over) cand.push_back(i);
            Rng rng(derive_seed(o.seed, "balance/pass", static_cast<std::uint64_t>(iterations) * L + l));
            std::shuffle(cand.begin(), cand.end(), rng);
            std::stable_sort(cand.begin(), cand.end(), [&](std::size_t a, std::size_t b) {
                return d.examples[a].labels.size() < d.examples[b].labels.size();
            });
            for (std::size_t k = 0; k < cand.size() && count(l, over) > allowed; ++k) {
                remove(cand[k]);
                removed_any = true;
            }
        }
        if (!removed_any) {
            converged = true;
            break;
        }
    }

    BalanceResult r = finish(d, keep, o, dropped);
    r.iterations = iterations;
    r.converged = converged;
    return r;
}

BalanceResult balance(const Dataset& dataset, const BalanceOptions& options) {
    return dataset.schema.task_kind == TaskKind::multi_class ? balance_single_label(dataset, options)
                                                             : balance_multi_label(dataset, options);
}

Dataset apply_balance(const Dataset& dataset, const BalanceResult& result) { return subset(dataset, result.retained); }

nlohmann::ordered_json balance_json(const BalanceResult& r, const Schema& schema) {
    nlohmann::ordered_json j;
    j["alpha"] = r.alpha;
    j["iterations"] = r.iterations;
    j["converged"] = r.converged;
    // +inf is not representable in JSON
    j["achieved_alpha"] = std::isfinite(r.achieved_alpha) ? nlohmann::ordered_json(r.achieved_alpha)
                                                         : nlohmann::ordered_json("inf");
    j["retained_count"] = r.retained_ids.size();
    j["removed_count"] = r.removed_ids.size();
    nlohmann::ordered_json counts = nlohmann::ordered_json::array();
    for (std::size_t l = 0; l < r.table.label_count(); ++l)
        counts.push_back({{"label", schema.labels[l]}, {"m", r.table.count_m[l]}, {"w", r.table.count_w[l]}});
    j["label_counts"] = counts;
    std::vector<std::string> dropped;
    for (int l : r.dropped_labels) dropped.push_back(schema.labels[static_cast<std::size_t>(l)]);
    j["dropped_labels"] = dropped;
    j["retained_ids"] = r.retained_ids;
    j["removed_ids"] = r.removed_ids;
    return j;
}

}  // namespace leakaudit
