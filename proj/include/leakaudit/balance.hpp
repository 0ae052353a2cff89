#pragma once

// alpha-constrained subsampling. A label satisfies alpha > 1 when
// 1/alpha < #(m,y)/#(w,y) < alpha; alpha = 1 means #(m,y) == #(w,y).
// Labels with no examples at all are unconstrained.

#include "leakaudit/dataset.hpp"

#include "json.hpp"

#include <limits>
#include <vector>

namespace leakaudit {

/// Worst-case ratio max(m/w, w/m) of one label; +inf when one side is 0,
/// 1 when the label is absent.
double label_ratio(long m, long w);
bool satisfies_alpha(long m, long w, double alpha);
/// Largest count of the over-represented gender allowed against `under`.
long max_allowed(long under, double alpha);

/// Max label_ratio over labels not in `ignored`.
double achieved_alpha(const CooccurrenceTable& table, std::span<const int> ignored = {});
double achieved_alpha(const Dataset& dataset);

struct BalanceOptions {
    double alpha = 2.0;
    std::uint64_t seed = 0;
    int max_iters = 50;
    /// Labels seen with one gender only are dropped instead of rejected.
    bool drop_infeasible = false;
};

struct BalanceResult {
    std::vector<std::size_t> retained;
    std::vector<std::size_t> removed;
    std::vector<std::string> retained_ids;
    std::vector<std::string> removed_ids;
    int iterations = 0;
    bool converged = true;
    double alpha = 1.0;
    double achieved_alpha = 1.0;
    CooccurrenceTable table;
    std::vector<int> dropped_labels;
};

/// multi_class data; throws std::invalid_argument naming one-gender labels
/// unless drop_infeasible (then every example of such a label is removed).
BalanceResult balance_single_label(const Dataset& dataset, const BalanceOptions& options);

/// Iterative removal heuristic for multi_label data. Not converging within
/// max_iters is reported through `converged`, not thrown.
BalanceResult balance_multi_label(const Dataset& dataset, const BalanceOptions& options);

/// Dispatches on the task kind.
BalanceResult balance(const Dataset& dataset, const BalanceOptions& options);

Dataset apply_balance(const Dataset& dataset, const BalanceResult& result);

nlohmann::ordered_json balance_json(const BalanceResult& result, const Schema& schema);

}  // namespace leakaudit
