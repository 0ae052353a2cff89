#include "leakaudit/report.hpp"

#include <openssl/evp.h>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

namespace leakaudit {

namespace {

std::string hex(const unsigned char* data, unsigned len) {
    std::ostringstream os;
    os << std::hex << std::setfill('0');
    for (unsigned i = 0; i < len; ++i) os << std::setw(2) << static_cast<int>(data[i]);
    return os.str();
}

using CtxPtr = std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)>;

CtxPtr new_sha256() {
    CtxPtr ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw std::runtime_error("sha256 init failed");
    return ctx;
}

std::string finish(EVP_MD_CTX* ctx) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned len = 0;
    if (EVP_DigestFinal_ex(ctx, md, &len) != 1) throw std::runtime_error("sha256 final failed");
    return hex(md, len);
}

// %.17g keeps doubles round-trippable in CSV
std::string num(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

}  // namespace

std::string sha256_hex(std::string_view bytes) {
    auto ctx = new_sha256();
    EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size());
    return finish(ctx.get());
}

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    auto ctx = new_sha256();
    std::vector<char> buf(1 << 16);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    return finish(ctx.get());
}

OutputLock::OutputLock(const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const auto path = dir / ".lock";
    fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) throw LockError("cannot open " + path.string() + ": " + std::strerror(errno));
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
        ::close(fd_);
        fd_ = -1;
        throw LockError("output directory " + dir.string() + " is locked by another run");
    }
}

OutputLock::~OutputLock() {
    if (fd_ >= 0) {
        ::flock(fd_, LOCK_UN);
        ::close(fd_);
    }
}

void RunManifest::add_input(const std::filesystem::path& path) { inputs.push_back({path.string(), sha256_file(path)}); }

void RunManifest::add_output(const std::filesystem::path& dir, const std::string& name) {
    outputs.push_back({name, sha256_file(dir / name)});
}

nlohmann::ordered_json RunManifest::to_json() const {
    nlohmann::ordered_json j;
    j["schema_version"] = kOutputSchemaVersion;
    j["tool_version"] = kToolVersion;
    j["command"] = command;
    j["seed"] = seed;
    j["config"] = config;
    auto files = [](const std::vector<FileDigest>& v) {
        nlohmann::ordered_json a = nlohmann::ordered_json::array();
        for (const auto& f : v) a.push_back({{"path", f.path}, {"sha256", f.sha256}});
        return a;
    };
    j["inputs"] = files(inputs);
    j["outputs"] = files(outputs);
    return j;
}

void write_text(const std::filesystem::path& path, std::string_view content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw std::runtime_error("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::string dump_json(const nlohmann::ordered_json& j) { return j.dump(2) + "\n"; }

std::string csv_header_line() { return "# leakaudit schema_version=" + std::to_string(kOutputSchemaVersion) + "\n"; }

void check_schema_version(const nlohmann::json& j, const std::string& what) {
    if (!j.is_object() || !j.contains("schema_version")) return;
    if (!j["schema_version"].is_number_integer() || j["schema_version"].get<int>() != kOutputSchemaVersion)
        throw DataError(what + ": unsupported schema_version " + j["schema_version"].dump());
}

PerClassDelta per_class_delta(const Predictions& before, const Predictions& after, const Dataset& dataset) {
    const Matrix gold = label_matrix(dataset);
    const auto fb = per_label_f1(threshold(align_logits(before, dataset), dataset.schema.task_kind), gold);
    const auto fa = per_label_f1(threshold(align_logits(after, dataset), dataset.schema.task_kind), gold);
    PerClassDelta d;
    double total = 0.0;
    for (std::size_t l = 0; l < fb.size(); ++l) {
        d.rows.push_back({dataset.schema.labels[l], fb[l], fa[l]});
        total += d.rows.back().drop();
        d.max_drop = l == 0 ? d.rows.back().drop() : std::max(d.max_drop, d.rows.back().drop());
    }
    d.mean_drop = fb.empty() ? 0.0 : total / static_cast<double>(fb.size());
    return d;
}

std::string per_class_csv(const PerClassDelta& d) {
    std::string out = csv_header_line() + "label,f1_before,f1_after,drop\n";
    for (const auto& r : d.rows) out += r.label + "," + num(r.f1_before) + "," + num(r.f1_after) + "," + num(r.drop()) + "\n";
    return out;
}

}  // namespace leakaudit
