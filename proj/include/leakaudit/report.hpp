#pragma once

// Run plumbing shared by the CLI: manifests, output-directory locks, file
// digests, schema-versioned writers, and per-label F1 comparisons.

#include "leakaudit/dataset.hpp"
#include "leakaudit/metrics.hpp"

#include "json.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace leakaudit {

inline constexpr const char* kToolVersion = "0.1.0";
/// Version stamped into every JSON and CSV output.
inline constexpr int kOutputSchemaVersion = 1;

std::string sha256_hex(std::string_view bytes);
/// Throws std::runtime_error when the file cannot be read.
std::string sha256_file(const std::filesystem::path& path);

class LockError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Exclusive advisory lock on `dir/.lock` (directory created if needed).
/// Throws LockError when another process holds it.
class OutputLock {
public:
    explicit OutputLock(const std::filesystem::path& dir);
    ~OutputLock();
    OutputLock(const OutputLock&) = delete;
    OutputLock& operator=(const OutputLock&) = delete;

private:
    int fd_ = -1;
};

struct FileDigest {
    std::string path;
    std::string sha256;
};

struct RunManifest {
    std::string command;
    nlohmann::ordered_json config = nlohmann::ordered_json::object();
    std::uint64_t seed = 0;
    std::vector<FileDigest> inputs;
    /// Paths relative to the output directory.
    std::vector<FileDigest> outputs;

    void add_input(const std::filesystem::path& path);
    void add_output(const std::filesystem::path& dir, const std::string& name);
    nlohmann::ordered_json to_json() const;
};

/// Writes through a temporary file and a rename.
void write_text(const std::filesystem::path& path, std::string_view content);
/// Two-space indent, trailing newline.
std::string dump_json(const nlohmann::ordered_json& j);
std::string csv_header_line();
/// Throws DataError when `j` declares a schema_version other than ours.
void check_schema_version(const nlohmann::json& j, const std::string& what);

struct PerClassRow {
    std::string label;
    double f1_before = 0.0;
    double f1_after = 0.0;
    double drop() const { return f1_before - f1_after; }
};

struct PerClassDelta {
    std::vector<PerClassRow> rows;
    double max_drop = 0.0;
    double mean_drop = 0.0;
};

/// Per-label F1 before/after; both prediction sets must cover the dataset.
PerClassDelta per_class_delta(const Predictions& before, const Predictions& after, const Dataset& dataset);
std::string per_class_csv(const PerClassDelta& delta);

}  // namespace leakaudit
