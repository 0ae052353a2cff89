#include "leakaudit/dataset.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_set>

namespace leakaudit {

using nlohmann::json;

std::string to_string(Gender g) { return g == Gender::M ? "M" : "W"; }

std::optional<Gender> parse_gender(std::string_view text) {
    if (text == "M") return Gender::M;
    if (text == "W") return Gender::W;
    return std::nullopt;
}

std::string to_string(TaskKind kind) { return kind == TaskKind::multi_label ? "multi_label" : "multi_class"; }

TaskKind task_kind_from_string(const std::string& name) {
    if (name == "multi_label") return TaskKind::multi_label;
    if (name == "multi_class") return TaskKind::multi_class;
    throw DataError("unknown task_kind '" + name + "'");
}

int Schema::label_index(std::string_view name) const {
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == name) return static_cast<int>(i);
    return -1;
}

bool Example::has_label(int label) const { return std::binary_search(labels.begin(), labels.end(), label); }

bool Dataset::has_features() const {
    return !examples.empty() &&
           std::all_of(examples.begin(), examples.end(), [](const Example& e) { return e.features.has_value(); });
}

std::array<std::size_t, kGenderCount> Dataset::gender_counts() const {
    std::array<std::size_t, kGenderCount> c{0, 0};
    for (const auto& e : examples) ++c[static_cast<std::size_t>(index_of(e.gender))];
    return c;
}

DataError::DataError(const std::string& what, std::size_t line, const std::string& file)
    : std::runtime_error((file.empty() ? "" : file + ": ") + (line > 0 ? "line " + std::to_string(line) + ": " : "") +
                         what),
      line_(line),
      detail_(what) {}

namespace {

void validate_example(const Example& e, const Schema& schema, std::size_t line) {
    if (e.labels.empty()) throw DataError("example '" + e.id + "' has no labels", line);
    if (schema.task_kind == TaskKind::multi_class && e.labels.size() != 1)
        throw DataError("multi_class example '" + e.id + "' must carry exactly one label", line);
    for (std::size_t i = 0; i < e.labels.size(); ++i) {
        if (e.labels[i] < 0 || e.labels[i] >= schema.label_count())
            throw DataError("example '" + e.id + "' has label index out of range", line);
        if (i > 0 && e.labels[i] <= e.labels[i - 1])
            throw DataError("example '" + e.id + "' has unsorted or duplicate labels", line);
    }
    if (e.features && static_cast<int>(e.features->size()) != schema.feature_width)
        throw DataError("example '" + e.id + "' has " + std::to_string(e.features->size()) +
                            " features, schema declares " + std::to_string(schema.feature_width),
                        line);
}

Schema schema_from_json(const json& j) {
    Schema s;
    s.task_kind = task_kind_from_string(j.at("task_kind").get<std::string>());
    s.labels = j.at("labels").get<std::vector<std::string>>();
    s.feature_width = j.value("feature_width", 0);
    s.protected_attribute = j.value("protected_attribute", std::string("gender"));
    if (s.labels.empty()) throw DataError("schema declares no labels");
    if (s.feature_width < 0) throw DataError("schema feature_width must be non-negative");
    std::set<std::string> seen(s.labels.begin(), s.labels.end());
    if (seen.size() != s.labels.size()) throw DataError("schema label names must be unique");
    return s;
}

Example parse_record(const std::string& text, const Schema& schema, std::size_t line) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw DataError(std::string("malformed JSON: ") + e.what(), line);
    }
    if (!j.is_object()) throw DataError("record is not an object", line);
    Example e;
    if (!j.contains("id") || !j["id"].is_string()) throw DataError("missing string field 'id'", line);
    e.id = j["id"].get<std::string>();

    if (!j.contains("gender") || !j["gender"].is_string())
        throw DataError("missing " + schema.protected_attribute + " for '" + e.id + "'", line);
    const auto g = parse_gender(j["gender"].get<std::string>());
    if (!g) throw DataError("invalid " + schema.protected_attribute + " '" + j["gender"].get<std::string>() +
                                "' (expected \"M\" or \"W\")",
                            line);
    e.gender = *g;

    if (!j.contains("labels")) throw DataError("missing field 'labels'", line);
    std::vector<std::string> names;
    if (j["labels"].is_string()) {
        names.push_back(j["labels"].get<std::string>());
    } else if (j["labels"].is_array()) {
        for (const auto& n : j["labels"]) {
            if (!n.is_string()) throw DataError("label names must be strings", line);
            names.push_back(n.get<std::string>());
        }
    } else {
        throw DataError("'labels' must be a string or an array of strings", line);
    }
    for (const auto& n : names) {
        const int idx = schema.label_index(n);
        if (idx < 0) throw DataError("unknown label name '" + n + "'", line);
        e.labels.push_back(idx);
    }
    std::sort(e.labels.begin(), e.labels.end());
    if (std::adjacent_find(e.labels.begin(), e.labels.end()) != e.labels.end())
        throw DataError("duplicate label in '" + e.id + "'", line);

    if (j.contains("features") && !j["features"].is_null()) {
        if (!j["features"].is_array()) throw DataError("'features' must be an array or null", line);
        std::vector<double> f;
        f.reserve(j["features"].size());
        for (const auto& v : j["features"]) {
            if (!v.is_number()) throw DataError("non-numeric feature value", line);
            f.push_back(v.get<double>());
        }
        e.features = std::move(f);
    }
    validate_example(e, schema, line);
    return e;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

}  // namespace

void validate(const Dataset& dataset, bool require_both_genders) {
    std::unordered_set<std::string> ids;
    for (std::size_t i = 0; i < dataset.examples.size(); ++i) {
        const auto& e = dataset.examples[i];
        validate_example(e, dataset.schema, 0);
        if (!ids.insert(e.id).second) throw DataError("duplicate id '" + e.id + "'");
    }
    if (require_both_genders) {
        const auto c = dataset.gender_counts();
        if (c[0] == 0 || c[1] == 0)
            throw DataError("dataset needs both values of " + dataset.schema.protected_attribute + " (M=" +
                            std::to_string(c[0]) + ", W=" + std::to_string(c[1]) + ")");
    }
}

Schema load_schema(const std::filesystem::path& schema_path) {
    try {
        return schema_from_json(json::parse(read_file(schema_path)));
    } catch (const json::exception& e) {
        throw DataError(schema_path.string() + ": " + e.what());
    }
}

void save_schema(const Schema& schema, const std::filesystem::path& schema_path) {
    json j;
    j["task_kind"] = to_string(schema.task_kind);
    j["labels"] = schema.labels;
    j["feature_width"] = schema.feature_width;
    j["protected_attribute"] = schema.protected_attribute;
    std::ofstream os(schema_path, std::ios::trunc);
    if (!os) throw DataError("cannot write " + schema_path.string());
    os << j.dump(2) << "\n";
}

Dataset parse_dataset(std::string_view jsonl, const Schema& schema) {
    Dataset d;
    d.schema = schema;
    std::unordered_set<std::string> ids;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= jsonl.size()) {
        const std::size_t end = std::min(jsonl.find('\n', pos), jsonl.size());
        std::string line(jsonl.substr(pos, end - pos));
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        Example e = parse_record(line, schema, line_no);
        if (!ids.insert(e.id).second) throw DataError("duplicate id '" + e.id + "'", line_no);
        d.examples.push_back(std::move(e));
    }
    if (d.examples.empty()) throw DataError("no examples");
    validate(d, true);
    return d;
}

Dataset load_dataset(const std::filesystem::path& path, const std::filesystem::path& schema_path) {
    const Schema schema = load_schema(schema_path);
    try {
        return parse_dataset(read_file(path), schema);
    } catch (const DataError& e) {
        throw DataError(e.detail(), e.line(), path.filename().string());
    }
}

std::string serialize_example(const Example& e, const Schema& schema) {
    json j;
    j["id"] = e.id;
    if (e.features) {
        j["features"] = *e.features;
    } else {
        j["features"] = nullptr;
    }
    if (schema.task_kind == TaskKind::multi_class) {
        j["labels"] = schema.labels.at(static_cast<std::size_t>(e.labels.front()));
    } else {
        auto& arr = j["labels"] = json::array();
        for (int l : e.labels) arr.push_back(schema.labels.at(static_cast<std::size_t>(l)));
    }
    j["gender"] = to_string(e.gender);
    return j.dump();
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::trunc | std::ios::binary);
    if (!os) throw DataError("cannot write " + path.string());
    for (const auto& e : dataset.examples) os << serialize_example(e, dataset.schema) << "\n";
}

// ---------------------------------------------------------------------------

Dataset subset(const Dataset& dataset, std::span<const std::size_t> indices) {
    Dataset out;
    out.schema = dataset.schema;
    out.examples.reserve(indices.size());
    for (std::size_t i : indices) out.examples.push_back(dataset.examples.at(i));
    return out;
}

Dataset concatenate(const Dataset& a, const Dataset& b) {
    if (!(a.schema == b.schema)) throw DataError("cannot concatenate datasets with different schemas");
    Dataset out = a;
    out.examples.insert(out.examples.end(), b.examples.begin(), b.examples.end());
    return out;
}

Matrix feature_matrix(const Dataset& dataset) {
    Matrix m(static_cast<Eigen::Index>(dataset.size()), dataset.schema.feature_width);
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const auto& f = dataset.examples[i].features;
        if (!f) throw DataError("example '" + dataset.examples[i].id + "' has no features");
        for (int c = 0; c < dataset.schema.feature_width; ++c)
            m(static_cast<Eigen::Index>(i), c) = (*f)[static_cast<std::size_t>(c)];
    }
    return m;
}

Matrix label_matrix(const Dataset& dataset) {
    Matrix m = Matrix::Zero(static_cast<Eigen::Index>(dataset.size()), dataset.schema.label_count());
    for (std::size_t i = 0; i < dataset.size(); ++i)
        for (int l : dataset.examples[i].labels) m(static_cast<Eigen::Index>(i), l) = 1.0;
    return m;
}

std::vector<int> class_targets(const Dataset& dataset) {
    if (dataset.schema.task_kind != TaskKind::multi_class)
        throw std::invalid_argument("class_targets requires multi_class data");
    std::vector<int> out;
    out.reserve(dataset.size());
    for (const auto& e : dataset.examples) out.push_back(e.labels.front());
    return out;
}

std::vector<Gender> genders_of(const Dataset& dataset) {
    std::vector<Gender> out;
    out.reserve(dataset.size());
    for (const auto& e : dataset.examples) out.push_back(e.gender);
    return out;
}

std::vector<std::string> ids_of(const Dataset& dataset) {
    std::vector<std::string> out;
    out.reserve(dataset.size());
    for (const auto& e : dataset.examples) out.push_back(e.id);
    return out;
}

std::vector<int> one_gender_labels(const Dataset& dataset) {
    const CooccurrenceTable t = cooccurrence(dataset);
    std::vector<int> out;
    for (std::size_t l = 0; l < t.label_count(); ++l) {
        if ((t.count_m[l] == 0) != (t.count_w[l] == 0)) out.push_back(static_cast<int>(l));
    }
    return out;
}

Dataset drop_labels(const Dataset& dataset, std::span<const int> labels) {
    const std::set<int> drop(labels.begin(), labels.end());
    std::vector<int> remap(static_cast<std::size_t>(dataset.schema.label_count()), -1);
    Dataset out;
    out.schema = dataset.schema;
    out.schema.labels.clear();
    for (int l = 0; l < dataset.schema.label_count(); ++l) {
        if (drop.count(l)) continue;
        remap[static_cast<std::size_t>(l)] = out.schema.label_count();
        out.schema.labels.push_back(dataset.schema.labels[static_cast<std::size_t>(l)]);
    }
    for (const auto& e : dataset.examples) {
        Example copy = e;
        copy.labels.clear();
        for (int l : e.labels)
            if (remap[static_cast<std::size_t>(l)] >= 0) copy.labels.push_back(remap[static_cast<std::size_t>(l)]);
        if (!copy.labels.empty()) out.examples.push_back(std::move(copy));
    }
    return out;
}

// ---------------------------------------------------------------------------

namespace {

/// Largest-remainder apportionment of n items over the three fractions.
std::array<std::size_t, 3> apportion(std::size_t n, const std::array<double, 3>& f) {
    std::array<std::size_t, 3> counts{};
    std::array<double, 3> rem{};
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < 3; ++i) {
        const double exact = static_cast<double>(n) * f[i];
        counts[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
        rem[i] = exact - static_cast<double>(counts[i]);
        assigned += counts[i];
    }
    std::array<std::size_t, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
    for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++counts[order[k % 3]];
    return counts;
}

}  // namespace

DatasetSplit split(const Dataset& dataset, const SplitFractions& fractions, std::uint64_t seed) {
    const std::array<double, 3> f{fractions.train, fractions.dev, fractions.test};
    for (double v : f)
        if (!(v > 0.0)) throw std::invalid_argument("split fractions must all be positive");
    if (std::abs(f[0] + f[1] + f[2] - 1.0) > 1e-9) throw std::invalid_argument("split fractions must sum to 1");

    std::array<std::vector<std::size_t>, 3> parts;
    static const char* kNames[3] = {"train", "dev", "test"};
    for (int g = 0; g < kGenderCount; ++g) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < dataset.size(); ++i)
            if (index_of(dataset.examples[i].gender) == g) idx.push_back(i);
        Rng rng(derive_seed(seed, "split", static_cast<std::uint64_t>(g)));
        std::shuffle(idx.begin(), idx.end(), rng);
        const auto counts = apportion(idx.size(), f);
        std::size_t pos = 0;
        for (std::size_t p = 0; p < 3; ++p) {
            if (counts[p] == 0)
                throw std::invalid_argument(std::string("split: ") + kNames[p] + " part would receive no " +
                                            to_string(static_cast<Gender>(g)) + " examples");
            parts[p].insert(parts[p].end(), idx.begin() + static_cast<std::ptrdiff_t>(pos),
                            idx.begin() + static_cast<std::ptrdiff_t>(pos + counts[p]));
            pos += counts[p];
        }
    }
    for (auto& p : parts) std::sort(p.begin(), p.end());
    return {subset(dataset, parts[0]), subset(dataset, parts[1]), subset(dataset, parts[2])};
}

std::vector<std::size_t> balanced_indices(std::span<const Gender> genders, std::size_t n_per_gender, Rng& rng) {
    if (n_per_gender == 0) throw std::invalid_argument("balanced sample needs n_per_gender >= 1");
    std::array<std::vector<std::size_t>, kGenderCount> by;
    for (std::size_t i = 0; i < genders.size(); ++i) by[static_cast<std::size_t>(index_of(genders[i]))].push_back(i);
    if (by[0].size() < n_per_gender || by[1].size() < n_per_gender)
        throw std::invalid_argument("balanced sample of " + std::to_string(n_per_gender) +
                                    " per gender impossible: M=" + std::to_string(by[0].size()) +
                                    ", W=" + std::to_string(by[1].size()));
    std::vector<std::size_t> out;
    out.reserve(2 * n_per_gender);
    for (auto& group : by) {
        auto picked = sample_without_replacement(group, n_per_gender, rng);
        out.insert(out.end(), picked.begin(), picked.end());
    }
    std::sort(out.begin(), out.end());
    return out;
}

Dataset gender_balanced_sample(const Dataset& dataset, std::size_t n_per_gender, std::uint64_t seed) {
    Rng rng(seed);
    const auto g = genders_of(dataset);
    const auto idx = balanced_indices(g, n_per_gender, rng);
    return subset(dataset, idx);
}

CooccurrenceTable& CooccurrenceTable::operator+=(const CooccurrenceTable& other) {
    if (other.label_count() != label_count()) throw std::invalid_argument("co-occurrence tables differ in size");
    for (std::size_t l = 0; l < label_count(); ++l) {
        count_m[l] += other.count_m[l];
        count_w[l] += other.count_w[l];
    }
    return *this;
}

CooccurrenceTable cooccurrence(const Dataset& dataset) {
    CooccurrenceTable t;
    const auto n = static_cast<std::size_t>(dataset.schema.label_count());
    t.count_m.assign(n, 0);
    t.count_w.assign(n, 0);
    for (const auto& e : dataset.examples) {
        auto& counts = e.gender == Gender::M ? t.count_m : t.count_w;
        for (int l : e.labels) ++counts[static_cast<std::size_t>(l)];
    }
    return t;
}

}  // namespace leakaudit
