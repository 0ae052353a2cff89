#include "leakaudit/report.hpp"

#include <gtest/gtest.h>

#include <fstream>

using namespace leakaudit;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("leakaudit_report_test_" + name);
    fs::remove_all(dir);
    return dir;
}

Dataset tiny() {
    Dataset d;
    d.schema.labels = {"a", "b", "c"};
    const std::vector<std::vector<int>> labels = {{0}, {0, 1}, {1, 2}, {2}, {0, 2}, {1}};
    for (std::size_t i = 0; i < labels.size(); ++i)
        d.examples.push_back({"x" + std::to_string(i), std::nullopt, labels[i], i % 2 ? Gender::W : Gender::M});
    return d;
}

}  // namespace

TEST(Digest, KnownVectors) {
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    const auto dir = scratch("digest");
    write_text(dir / "f.txt", "abc");
    EXPECT_EQ(sha256_file(dir / "f.txt"), sha256_hex("abc"));
    EXPECT_THROW(sha256_file(dir / "missing"), std::runtime_error);
    fs::remove_all(dir);
}

TEST(Lock, SecondHolderRejected) {
    const auto dir = scratch("lock");
    {
        OutputLock first(dir);
        EXPECT_THROW(OutputLock second(dir), LockError);
    }
    EXPECT_NO_THROW(OutputLock again(dir));
    fs::remove_all(dir);
}

TEST(Manifest, RecordsDigestsAndVersion) {
    const auto dir = scratch("manifest");
    write_text(dir / "in.jsonl", "{}\n");
    write_text(dir / "out.json", "[]\n");
    RunManifest m;
    m.command = "audit";
    m.seed = 7;
    m.config["rounds"] = 3;
    m.add_input(dir / "in.jsonl");
    m.add_output(dir, "out.json");
    const auto j = m.to_json();
    EXPECT_EQ(j["schema_version"], 1);
    EXPECT_EQ(j["tool_version"], kToolVersion);
    EXPECT_EQ(j["outputs"][0]["path"], "out.json");
    EXPECT_EQ(j["outputs"][0]["sha256"], sha256_hex("[]\n"));
    EXPECT_EQ(j["inputs"][0]["sha256"], sha256_hex("{}\n"));
    EXPECT_EQ(dump_json(j), dump_json(m.to_json()));
    fs::remove_all(dir);
}

TEST(SchemaVersion, UnknownRejected) {
    EXPECT_NO_THROW(check_schema_version(nlohmann::json::parse(R"({"schema_version": 1})"), "x"));
    EXPECT_NO_THROW(check_schema_version(nlohmann::json::parse(R"({"a": 1})"), "x"));
    EXPECT_THROW(check_schema_version(nlohmann::json::parse(R"({"schema_version": 2})"), "x"), DataError);
    EXPECT_EQ(csv_header_line(), "# leakaudit schema_version=1\n");
}

TEST(PerClass, IdenticalOnDiagonal) {
    const Dataset d = tiny();
    Matrix logits = (label_matrix(d).array() * 2.0 - 1.0).matrix();
    logits(0, 1) = 1.0;  // one false positive on label b
    const Predictions p = make_predictions(d, logits);
    const auto r = per_class_delta(p, p, d);
    ASSERT_EQ(r.rows.size(), 3u);
    for (const auto& row : r.rows) EXPECT_EQ(row.f1_before, row.f1_after);
    EXPECT_EQ(r.max_drop, 0.0);
    EXPECT_EQ(r.mean_drop, 0.0);
}

TEST(PerClass, SwapNegatesAndGapsRejected) {
    const Dataset d = tiny();
    const Matrix gold = (label_matrix(d).array() * 2.0 - 1.0).matrix();
    Matrix worse = gold;
    worse(1, 0) = -1.0;
    worse(2, 2) = -1.0;
    const Predictions a = make_predictions(d, gold), b = make_predictions(d, worse);
    const auto ab = per_class_delta(a, b, d), ba = per_class_delta(b, a, d);
    for (std::size_t l = 0; l < 3; ++l) EXPECT_DOUBLE_EQ(ab.rows[l].drop(), -ba.rows[l].drop());
    // label a: 3 positives, one missed -> F1 0.8
    EXPECT_DOUBLE_EQ(ab.rows[0].f1_after, 0.8);
    EXPECT_DOUBLE_EQ(ab.max_drop, 0.2);
    EXPECT_DOUBLE_EQ(ab.mean_drop, 0.4 / 3.0);
    const auto csv = per_class_csv(ab);
    EXPECT_EQ(csv.substr(0, csv.find('\n') + 1), csv_header_line());
    EXPECT_NE(csv.find("a,1,0.80000000000000004,0.19999999999999996"), std::string::npos);

    Predictions partial = b;
    partial.ids.pop_back();
    partial.logits.conservativeResize(5, Eigen::NoChange);
    EXPECT_THROW(per_class_delta(a, partial, d), std::invalid_argument);
}
