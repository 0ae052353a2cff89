#pragma once

#include "leakaudit/dataset.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace leakaudit {

/// Model outputs keyed by example id.
struct Predictions {
    std::vector<std::string> ids;
    Matrix logits;  // one row per id

    std::size_t size() const { return ids.size(); }
};

Predictions load_predictions(const std::filesystem::path& path);
void save_predictions(const Predictions& predictions, const std::filesystem::path& path);
Predictions make_predictions(const Dataset& dataset, const Matrix& logits);

/// Rows of `predictions` reordered to match the dataset's ids. Throws
/// std::invalid_argument listing (up to 10) missing ids, or on a width mismatch.
Matrix align_logits(const Predictions& predictions, const Dataset& dataset);

/// 0/1 matrix. multi_label: logit > 0. multi_class: one-hot argmax, lowest
/// index on exact ties.
Matrix threshold(const Matrix& logits, TaskKind task_kind);

/// 2TP / (2TP + FP + FN); 1 when gold and predictions are both empty.
double micro_f1(const Matrix& predicted01, const Matrix& gold01);
/// Per-label F1 with the same convention.
std::vector<double> per_label_f1(const Matrix& predicted01, const Matrix& gold01);
double macro_f1(const Matrix& predicted01, const Matrix& gold01);

enum class F1Kind { micro, macro };
std::string to_string(F1Kind kind);
double f1_score(const Matrix& predicted01, const Matrix& gold01, F1Kind kind);

/// Thresholds `logits` and scores them against the dataset labels.
double f1(const Matrix& logits, const Dataset& dataset);
/// Id-checked form.
double f1(const Predictions& predictions, const Dataset& dataset);

/// Average precision of one ranking; tied scores form a single threshold step.
double average_precision(std::span<const double> scores, std::span<const double> gold01);

struct MapResult {
    double value = 0.0;
    /// Labels with no positive example, left out of the mean.
    std::vector<int> excluded_labels;
};

/// Throws when no label has a positive.
MapResult mean_ap(const Matrix& logits, const Matrix& gold01);
MapResult mean_ap(const Matrix& logits, const Dataset& dataset);

}  // namespace leakaudit
