#include "leakaudit/metrics.hpp"

#include "json.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace leakaudit {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument("prediction/gold shape mismatch: " + std::to_string(a.rows()) + "x" +
                                    std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                    std::to_string(b.cols()));
}

double f1_from_counts(double tp, double fp, double fn) {
    const double denom = 2.0 * tp + fp + fn;
    return denom == 0.0 ? 1.0 : 2.0 * tp / denom;
}

}  // namespace

Predictions load_predictions(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open " + path.string());
    Predictions p;
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            p.ids.push_back(j.at("id").get<std::string>());
            rows.push_back(j.at("logits").get<std::vector<double>>());
        } catch (const nlohmann::json::exception& e) {
            throw DataError(e.what(), line_no, path.filename().string());
        }
        if (rows.back().size() != rows.front().size() || rows.back().empty())
            throw DataError("inconsistent logit width", line_no, path.filename().string());
    }
    if (rows.empty()) throw DataError(path.filename().string() + ": no predictions");
    p.logits.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t c = 0; c < rows[i].size(); ++c)
            p.logits(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
    return p;
}

void save_predictions(const Predictions& predictions, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::trunc | std::ios::binary);
    if (!os) throw DataError("cannot write " + path.string());
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        nlohmann::ordered_json j;
        j["id"] = predictions.ids[i];
        const auto row = predictions.logits.row(static_cast<Eigen::Index>(i));
        j["logits"] = std::vector<double>(row.data(), row.data() + row.size());
        os << j.dump() << "\n";
    }
}

Predictions make_predictions(const Dataset& dataset, const Matrix& logits) {
    if (static_cast<std::size_t>(logits.rows()) != dataset.size())
        throw std::invalid_argument("logit rows do not match dataset size");
    return {ids_of(dataset), logits};
}

Matrix align_logits(const Predictions& predictions, const Dataset& dataset) {
    if (predictions.logits.cols() != dataset.schema.label_count())
        throw std::invalid_argument("predictions have " + std::to_string(predictions.logits.cols()) +
                                    " logits per example, schema has " +
                                    std::to_string(dataset.schema.label_count()) + " labels");
    std::unordered_map<std::string, Eigen::Index> row_of;
    for (std::size_t i = 0; i < predictions.size(); ++i) row_of.emplace(predictions.ids[i], static_cast<Eigen::Index>(i));
    Matrix out(static_cast<Eigen::Index>(dataset.size()), predictions.logits.cols());
    std::vector<std::string> missing;
    std::size_t n_missing = 0;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const auto it = row_of.find(dataset.examples[i].id);
        if (it == row_of.end()) {
            if (missing.size() < 10) missing.push_back(dataset.examples[i].id);
            ++n_missing;
            continue;
        }
        out.row(static_cast<Eigen::Index>(i)) = predictions.logits.row(it->second);
    }
    if (n_missing > 0) {
        std::string msg = "predictions missing " + std::to_string(n_missing) + " id(s):";
        for (const auto& id : missing) msg += " " + id;
        if (n_missing > missing.size()) msg += " ...";
        throw std::invalid_argument(msg);
    }
    return out;
}

Matrix threshold(const Matrix& logits, TaskKind task_kind) {
    Matrix out = Matrix::Zero(logits.rows(), logits.cols());
    if (task_kind == TaskKind::multi_label) {
        out = (logits.array() > 0.0).cast<double>();
        return out;
    }
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        Eigen::Index best = 0;
        for (Eigen::Index c = 1; c < logits.cols(); ++c)
            if (logits(i, c) > logits(i, best)) best = c;
        out(i, best) = 1.0;
    }
    return out;
}

std::string to_string(F1Kind kind) { return kind == F1Kind::micro ? "micro" : "macro"; }

double f1_score(const Matrix& p, const Matrix& g, F1Kind kind) {
    return kind == F1Kind::micro ? micro_f1(p, g) : macro_f1(p, g);
}

double micro_f1(const Matrix& p, const Matrix& g) {
    require_same_shape(p, g);
    const double tp = (p.array() * g.array()).sum();
    const double fp = (p.array() * (1.0 - g.array())).sum();
    const double fn = ((1.0 - p.array()) * g.array()).sum();
    return f1_from_counts(tp, fp, fn);
}

std::vector<double> per_label_f1(const Matrix& p, const Matrix& g) {
    require_same_shape(p, g);
    std::vector<double> out;
    for (Eigen::Index c = 0; c < p.cols(); ++c) {
        const double tp = (p.col(c).array() * g.col(c).array()).sum();
        const double fp = (p.col(c).array() * (1.0 - g.col(c).array())).sum();
        const double fn = ((1.0 - p.col(c).array()) * g.col(c).array()).sum();
        out.push_back(f1_from_counts(tp, fp, fn));
    }
    return out;
}

double macro_f1(const Matrix& p, const Matrix& g) {
    const auto per = per_label_f1(p, g);
    if (per.empty()) return 1.0;
    return std::accumulate(per.begin(), per.end(), 0.0) / static_cast<double>(per.size());
}

double f1(const Matrix& logits, const Dataset& dataset) {
    return micro_f1(threshold(logits, dataset.schema.task_kind), label_matrix(dataset));
}

double f1(const Predictions& predictions, const Dataset& dataset) {
    if (predictions.size() != dataset.size()) throw std::invalid_argument("prediction count does not match dataset");
    for (std::size_t i = 0; i < dataset.size(); ++i)
        if (predictions.ids[i] != dataset.examples[i].id)
            throw std::invalid_argument("prediction id '" + predictions.ids[i] + "' does not match dataset id '" +
                                        dataset.examples[i].id + "' at row " + std::to_string(i));
    return f1(predictions.logits, dataset);
}

double average_precision(std::span<const double> scores, std::span<const double> gold) {
    if (scores.size() != gold.size()) throw std::invalid_argument("average_precision: length mismatch");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    const double positives = std::accumulate(gold.begin(), gold.end(), 0.0);
    if (positives == 0.0) throw std::invalid_argument("average_precision: no positive examples");
    double ap = 0.0, tp = 0.0, seen = 0.0, prev_recall = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            tp += gold[order[j]];
            seen += 1.0;
            ++j;
        }
        const double recall = tp / positives;
        ap += (recall - prev_recall) * (tp / seen);
        prev_recall = recall;
        i = j;
    }
    return ap;
}

MapResult mean_ap(const Matrix& logits, const Matrix& gold) {
    require_same_shape(logits, gold);
    MapResult r;
    double sum = 0.0;
    int used = 0;
    std::vector<double> s(static_cast<std::size_t>(logits.rows())), g(static_cast<std::size_t>(logits.rows()));
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
        for (Eigen::Index i = 0; i < logits.rows(); ++i) {
            s[static_cast<std::size_t>(i)] = logits(i, c);
            g[static_cast<std::size_t>(i)] = gold(i, c);
        }
        if (gold.col(c).sum() == 0.0) {
            r.excluded_labels.push_back(static_cast<int>(c));
            continue;
        }
        sum += average_precision(s, g);
        ++used;
    }
    if (used == 0) throw std::invalid_argument("mean_ap: no label has a positive example");
    r.value = sum / used;
    return r;
}

MapResult mean_ap(const Matrix& logits, const Dataset& dataset) { return mean_ap(logits, label_matrix(dataset)); }

}  // namespace leakaudit
