#pragma once

#include "leakaudit/nn.hpp"
#include "leakaudit/rng.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace leakaudit {

/// Binary protected attribute. The schema carries the attribute's name, so the
/// same types serve any two-valued attribute.
enum class Gender : std::uint8_t { M = 0, W = 1 };
inline constexpr int kGenderCount = 2;

inline int index_of(Gender g) { return static_cast<int>(g); }
std::string to_string(Gender g);
std::optional<Gender> parse_gender(std::string_view text);

enum class TaskKind { multi_label, multi_class };
std::string to_string(TaskKind kind);
TaskKind task_kind_from_string(const std::string& name);

struct Schema {
    TaskKind task_kind = TaskKind::multi_label;
    std::vector<std::string> labels;
    int feature_width = 0;
    std::string protected_attribute = "gender";

    int label_count() const { return static_cast<int>(labels.size()); }
    /// -1 when unknown.
    int label_index(std::string_view name) const;
    bool operator==(const Schema&) const = default;
};

struct Example {
    std::string id;
    std::optional<std::vector<double>> features;
    /// Sorted label indices; exactly one entry for multi-class data.
    std::vector<int> labels;
    Gender gender = Gender::M;

    bool has_label(int label) const;
    bool operator==(const Example&) const = default;
};

struct Dataset {
    Schema schema;
    std::vector<Example> examples;

    std::size_t size() const { return examples.size(); }
    bool empty() const { return examples.empty(); }
    bool has_features() const;
    std::array<std::size_t, kGenderCount> gender_counts() const;
};

/// Raised for malformed input; `line` is 1-based, 0 when not line-specific.
class DataError : public std::runtime_error {
public:
    DataError(const std::string& what, std::size_t line = 0, const std::string& file = "");
    std::size_t line() const { return line_; }
    /// Message without the file and line prefix.
    const std::string& detail() const { return detail_; }

private:
    std::size_t line_;
    std::string detail_;
};

/// Checks every example against the schema and, when `require_both_genders`,
/// that each gender appears at least once. Throws DataError.
void validate(const Dataset& dataset, bool require_both_genders = true);

Schema load_schema(const std::filesystem::path& schema_path);
void save_schema(const Schema& schema, const std::filesystem::path& schema_path);

/// Line-delimited records, ingestion order preserved. Errors carry line numbers.
Dataset load_dataset(const std::filesystem::path& path, const std::filesystem::path& schema_path);
Dataset parse_dataset(std::string_view jsonl, const Schema& schema);
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
std::string serialize_example(const Example& example, const Schema& schema);

// ---------------------------------------------------------------------------
// Views and reshaping

Dataset subset(const Dataset& dataset, std::span<const std::size_t> indices);
Dataset concatenate(const Dataset& a, const Dataset& b);
/// Throws when any example lacks features.
Matrix feature_matrix(const Dataset& dataset);
/// Dense 0/1 matrix, one column per label (one-hot for multi-class).
Matrix label_matrix(const Dataset& dataset);
/// Multi-class targets; throws for multi-label data.
std::vector<int> class_targets(const Dataset& dataset);
std::vector<Gender> genders_of(const Dataset& dataset);
std::vector<std::string> ids_of(const Dataset& dataset);

/// Labels observed with only one gender ("extremely imbalanced" categories).
std::vector<int> one_gender_labels(const Dataset& dataset);
/// Removes the listed labels from the schema and every example; examples left
/// with no label are dropped.
Dataset drop_labels(const Dataset& dataset, std::span<const int> labels);

// ---------------------------------------------------------------------------

struct SplitFractions {
    double train = 0.8;
    double dev = 0.1;
    double test = 0.1;
};

struct DatasetSplit {
    Dataset train;
    Dataset dev;
    Dataset test;
};

/// Seeded, gender-stratified partition (largest-remainder rounding per gender).
/// Each part keeps the input's relative order.
DatasetSplit split(const Dataset& dataset, const SplitFractions& fractions, std::uint64_t seed);

/// Index-level balanced draw used by every pool constructor: `n_per_gender`
/// distinct indices of each gender, returned in ascending order.
std::vector<std::size_t> balanced_indices(std::span<const Gender> genders, std::size_t n_per_gender,
                                          Rng& rng);

Dataset gender_balanced_sample(const Dataset& dataset, std::size_t n_per_gender, std::uint64_t seed);

struct CooccurrenceTable {
    std::vector<long> count_m;
    std::vector<long> count_w;

    std::size_t label_count() const { return count_m.size(); }
    CooccurrenceTable& operator+=(const CooccurrenceTable& other);
    bool operator==(const CooccurrenceTable&) const = default;
};

CooccurrenceTable cooccurrence(const Dataset& dataset);

}  // namespace leakaudit
