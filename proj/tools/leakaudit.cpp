// leakaudit command line: synth, audit, balance, train, debias, sweep, curve, perclass.

#include "leakaudit/audit.hpp"
#include "leakaudit/balance.hpp"
#include "leakaudit/debias.hpp"
#include "leakaudit/report.hpp"
#include "leakaudit/synth.hpp"

#include "CLI11.hpp"

#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace leakaudit;
using nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitInvalid = 2;
constexpr int kExitBelowFloor = 3;

fs::path default_out(const std::string& command) {
    const char* root = std::getenv("LEAKAUDIT_OUT");
    return fs::path(root && *root ? root : "leakaudit_out") / command;
}

struct Common {
    std::string out;
    std::uint64_t seed = 0;
    fs::path out_dir(const std::string& command) const { return out.empty() ? default_out(command) : fs::path(out); }
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--out", c.out, "output directory (default $LEAKAUDIT_OUT/<command>)");
    app->add_option("--seed", c.seed, "master seed");
}

void add_attacker(CLI::App* app, AttackerConfig& a) {
    app->add_option("--rounds", a.rounds, "attacker rounds")->capture_default_str();
    app->add_option("--attacker-layers", a.n_layers, "attacker hidden blocks (1 = linear)")->capture_default_str();
    app->add_option("--attacker-hidden", a.hidden_dim)->capture_default_str();
    app->add_option("--attacker-epochs", a.epochs)->capture_default_str();
    app->add_option("--attacker-lr", a.lr)->capture_default_str();
    app->add_option("--attacker-batch", a.batch_size)->capture_default_str();
    app->add_option("--train-pool", a.train_n_per_gender, "attacker-train examples per gender")->capture_default_str();
    app->add_option("--eval-pool", a.eval_n_per_gender, "attacker dev/test examples per gender")->capture_default_str();
}

void add_train(CLI::App* app, TrainConfig& t) {
    app->add_option("--hidden", t.hidden_dim)->capture_default_str();
    app->add_option("--blocks", t.blocks)->capture_default_str();
    app->add_option("--lr", t.lr)->capture_default_str();
    app->add_option("--batch", t.batch_size)->capture_default_str();
    app->add_option("--max-epochs", t.max_epochs)->capture_default_str();
    app->add_option("--patience", t.patience)->capture_default_str();
}

ordered_json train_config_json(const TrainConfig& t) {
    return {{"hidden_dim", t.hidden_dim}, {"blocks", t.blocks},         {"lr", t.lr},
            {"batch_size", t.batch_size}, {"max_epochs", t.max_epochs}, {"patience", t.patience}};
}

fs::path schema_for(const std::string& data, const std::string& schema) {
    if (!schema.empty()) return schema;
    return fs::path(data).parent_path() / "schema.json";
}

// Loads a dataset and records both files in the manifest.
Dataset load_input(RunManifest& m, const std::string& data, const std::string& schema) {
    const fs::path s = schema_for(data, schema);
    Dataset d = load_dataset(data, s);
    m.add_input(data);
    m.add_input(s);
    return d;
}

void write_json(const fs::path& dir, const std::string& name, const ordered_json& j, RunManifest& m) {
    write_text(dir / name, dump_json(j));
    m.add_output(dir, name);
}

void finish(const fs::path& dir, const RunManifest& m) { write_text(dir / "manifest.json", dump_json(m.to_json())); }

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

std::string stem_of(const std::string& path) {
    std::string s = fs::path(path).filename().string();
    if (auto p = s.find('.'); p != std::string::npos) s = s.substr(0, p);
    return s;
}

// synth ------------------------------------------------------------------

struct SynthArgs {
    Common common;
    std::string config;
    std::vector<double> fractions{0.8, 0.1, 0.1};
    int bayes_samples = 4000;
};

int run_synth(const SynthArgs& a, bool seed_given) {
    SynthConfig c = a.config.empty() ? SynthConfig{} : load_synth_config(a.config);
    if (seed_given) c.seed = a.common.seed;
    validate(c);
    const fs::path dir = a.common.out_dir("synth");
    OutputLock lock(dir);
    RunManifest m;
    m.command = "synth";
    m.seed = c.seed;
    if (!a.config.empty()) m.add_input(a.config);
    m.config = ordered_json::parse(synth_config_to_json(c));
    m.config["split"] = a.fractions;

    const Dataset d = generate(c);
    save_schema(d.schema, dir / "schema.json");
    m.add_output(dir, "schema.json");
    save_dataset(d, dir / "dataset.jsonl");
    m.add_output(dir, "dataset.jsonl");
    write_text(dir / "synth_config.json", synth_config_to_json(c));
    m.add_output(dir, "synth_config.json");

    if (a.fractions.size() != 3) throw std::invalid_argument("--split needs three fractions");
    const DatasetSplit parts = split(d, {a.fractions[0], a.fractions[1], a.fractions[2]}, derive_seed(c.seed, "split"));
    for (const auto& [name, part] : {std::pair{"train.jsonl", &parts.train}, std::pair{"dev.jsonl", &parts.dev},
                                     std::pair{"test.jsonl", &parts.test}}) {
        save_dataset(*part, dir / name);
        m.add_output(dir, name);
    }

    const BayesAccuracy b = bayes_gender_accuracy(c, a.bayes_samples);
    ordered_json bj;
    bj["schema_version"] = kOutputSchemaVersion;
    bj["bayes_from_labels"] = b.from_labels;
    bj["bayes_from_features"] = b.from_features;
    bj["feature_samples"] = a.bayes_samples;
    write_json(dir, "bayes.json", bj, m);
    finish(dir, m);
    std::cout << "wrote " << d.size() << " examples to " << dir.string() << "\n";
    return kExitOk;
}

// audit ------------------------------------------------------------------

struct AuditArgs {
    Common common;
    std::string data, schema, preds;
    AttackerConfig attacker;
    double tolerance = 0.01;
    bool macro = false;
    bool drop_infeasible = false;
};

Predictions drop_columns(const Predictions& p, const std::vector<int>& dropped) {
    std::vector<Eigen::Index> keep;
    for (Eigen::Index c = 0; c < p.logits.cols(); ++c)
        if (std::find(dropped.begin(), dropped.end(), static_cast<int>(c)) == dropped.end()) keep.push_back(c);
    Predictions out;
    out.ids = p.ids;
    out.logits = p.logits(Eigen::all, keep);
    return out;
}

int run_audit_cmd(const AuditArgs& a) {
    const fs::path dir = a.common.out_dir("audit");
    OutputLock lock(dir);
    RunManifest m;
    m.command = "audit";
    m.seed = a.common.seed;
    Dataset d = load_input(m, a.data, a.schema);
    std::optional<Predictions> preds;
    if (!a.preds.empty()) {
        preds = load_predictions(a.preds);
        m.add_input(a.preds);
    }
    std::vector<std::string> dropped_names;
    if (a.drop_infeasible) {
        const std::vector<int> dropped = one_gender_labels(d);
        for (int l : dropped) dropped_names.push_back(d.schema.labels[static_cast<std::size_t>(l)]);
        if (!dropped.empty()) {
            d = drop_labels(d, dropped);
            if (preds) *preds = drop_columns(*preds, dropped);
        }
    }
    AuditOptions opt;
    opt.tolerance = a.tolerance;
    opt.metric = a.macro ? F1Kind::macro : F1Kind::micro;
    m.config["attacker"] = attacker_config_json(a.attacker);
    m.config["tolerance"] = a.tolerance;
    m.config["f1_metric"] = to_string(opt.metric);
    m.config["drop_infeasible"] = a.drop_infeasible;

    const LeakageReport r = run_audit(d, preds ? &*preds : nullptr, a.attacker, a.common.seed, opt);
    ordered_json j = report_json(r);
    j["dropped_labels"] = dropped_names;
    write_json(dir, "report.json", j, m);
    finish(dir, m);
    if (r.lambda_D) std::cout << "lambda_D      " << fmt(r.lambda_D->mean) << "\n";
    if (r.lambda_M) std::cout << "lambda_M      " << fmt(r.lambda_M->mean) << "\n";
    if (r.lambda_D_at_perf) std::cout << "lambda_D(F1)  " << fmt(r.lambda_D_at_perf->leakage.mean) << "\n";
    if (r.delta) std::cout << "delta         " << fmt(*r.delta) << "\n";
    return kExitOk;
}

// balance ----------------------------------------------------------------

struct BalanceArgs {
    Common common;
    std::string data, schema;
    BalanceOptions options;
    bool emit_subset = false;
};

int run_balance(BalanceArgs a) {
    const fs::path dir = a.common.out_dir("balance");
    OutputLock lock(dir);
    RunManifest m;
    m.command = "balance";
    m.seed = a.common.seed;
    const Dataset d = load_input(m, a.data, a.schema);
    a.options.seed = a.common.seed;
    m.config = {{"alpha", a.options.alpha},
                {"max_iters", a.options.max_iters},
                {"drop_infeasible", a.options.drop_infeasible},
                {"emit_subset", a.emit_subset}};
    const BalanceResult r = balance(d, a.options);
    write_json(dir, "balance.json", balance_json(r, d.schema), m);
    if (a.emit_subset) {
        const Dataset kept = apply_balance(d, r);
        save_dataset(kept, dir / "dataset.jsonl");
        m.add_output(dir, "dataset.jsonl");
        save_schema(kept.schema, dir / "schema.json");
        m.add_output(dir, "schema.json");
    }
    finish(dir, m);
    std::cout << "retained " << r.retained.size() << " of " << d.size() << ", achieved alpha "
              << fmt(r.achieved_alpha) << (r.converged ? "" : " (not converged)") << "\n";
    return kExitOk;
}

// train / debias ---------------------------------------------------------

void write_predictions(const MlpModel* model, const DebiasResult* result, const std::vector<std::string>& files,
                       const std::string& schema, const std::string& suffix, const fs::path& dir, RunManifest& m) {
    for (const std::string& f : files) {
        const Dataset d = load_input(m, f, schema);
        const Predictions p = result ? predict_dataset(*result, d) : predict_dataset(*model, d);
        const std::string name = stem_of(f) + suffix + ".preds.jsonl";
        save_predictions(p, dir / name);
        m.add_output(dir, name);
    }
}

struct TrainArgs {
    Common common;
    std::string data, dev, schema;
    std::vector<std::string> predict;
    TrainConfig train;
};

int run_train(const TrainArgs& a) {
    const fs::path dir = a.common.out_dir("train");
    OutputLock lock(dir);
    RunManifest m;
    m.command = "train";
    m.seed = a.common.seed;
    const Dataset train = load_input(m, a.data, a.schema);
    const Dataset dev = load_input(m, a.dev, a.schema.empty() ? schema_for(a.data, "").string() : a.schema);
    m.config = train_config_json(a.train);
    const BaselineResult r = train_baseline(train, dev, a.train, a.common.seed);
    save_checkpoint(r.model, dir / "predictor.ckpt");
    m.add_output(dir, "predictor.ckpt");
    ordered_json j;
    j["schema_version"] = kOutputSchemaVersion;
    j["config"] = m.config;
    j["best_epoch"] = r.best_epoch;
    j["epochs_run"] = r.epochs_run;
    j["train_loss"] = r.train_loss;
    j["dev_f1"] = r.dev_f1;
    write_json(dir, "train_run.json", j, m);
    write_predictions(&r.model, nullptr, a.predict, a.schema.empty() ? schema_for(a.data, "").string() : a.schema, "",
                      dir, m);
    finish(dir, m);
    std::cout << "best dev F1 " << fmt(r.best_epoch > 0 ? r.dev_f1[static_cast<std::size_t>(r.best_epoch - 1)] : 0.0)
              << " at epoch " << r.best_epoch << "\n";
    return kExitOk;
}

struct DebiasArgs {
    Common common;
    std::string data, dev, schema;
    std::vector<std::string> predict;
    DebiasConfig config;
    std::string tap = "embedding";
    std::optional<double> reference;
};

int run_debias(DebiasArgs a) {
    const fs::path dir = a.common.out_dir("debias");
    OutputLock lock(dir);
    RunManifest m;
    m.command = "debias";
    m.seed = a.common.seed;
    const std::string schema = a.schema.empty() ? schema_for(a.data, "").string() : a.schema;
    const Dataset train = load_input(m, a.data, schema);
    const Dataset dev = load_input(m, a.dev, schema);
    a.config.tap = tap_from_string(a.tap);
    a.config.seed = a.common.seed;
    a.config.reference_leakage = a.reference;
    validate(a.config);
    m.config = debias_config_json(a.config);

    const DebiasResult r =
        a.config.tap == Tap::input_mask ? adv_train_masked(train, dev, a.config) : adv_train(train, dev, a.config);
    save_checkpoint(r.predictor, dir / "predictor.ckpt");
    m.add_output(dir, "predictor.ckpt");
    save_checkpoint(r.critic, dir / "critic.ckpt");
    m.add_output(dir, "critic.ckpt");
    if (r.mask_generator) {
        save_checkpoint(*r.mask_generator, dir / "mask.ckpt");
        m.add_output(dir, "mask.ckpt");
    }
    if (!r.mask_generator) {
        save_checkpoint(r.baseline.model, dir / "baseline.ckpt");
        m.add_output(dir, "baseline.ckpt");
    }
    ordered_json j;
    j["schema_version"] = kOutputSchemaVersion;
    j["config"] = m.config;
    j["tap_index"] = r.tap_index;
    j["warmup_critic_accuracy"] = r.warmup_critic_accuracy;
    j["selected_epoch"] = r.selected_epoch;
    if (r.mask_generator) j["mean_mask"] = r.mean_mask;
    j["trace"] = trace_json(r.trace);
    write_json(dir, "debias_run.json", j, m);
    write_predictions(nullptr, &r, a.predict, schema, "", dir, m);
    if (!r.mask_generator) write_predictions(&r.baseline.model, nullptr, a.predict, schema, ".baseline", dir, m);
    finish(dir, m);
    std::cout << "warmup critic accuracy " << fmt(r.warmup_critic_accuracy) << ", selected epoch "
              << r.selected_epoch << "\n";
    return kExitOk;
}

// sweep ------------------------------------------------------------------

struct SweepArgs {
    Common common;
    std::string data, schema, checkpoint, train, dev;
    std::vector<double> noise, lambdas;
    AttackerConfig attacker;
    DebiasConfig debias;
    std::string tap = "embedding";
};

int run_sweep(SweepArgs a) {
    if (a.noise.empty() == a.lambdas.empty()) throw std::invalid_argument("give exactly one of --noise or --lambda");
    const fs::path dir = a.common.out_dir("sweep");
    OutputLock lock(dir);
    RunManifest m;
    m.command = "sweep";
    m.seed = a.common.seed;
    const std::string schema = a.schema.empty() ? schema_for(a.data, "").string() : a.schema;
    const Dataset audit = load_input(m, a.data, schema);
    m.config["attacker"] = attacker_config_json(a.attacker);

    std::ostringstream csv;
    csv << csv_header_line() << "kind,param,f1,lambda_M,lambda_M_std\n";
    if (!a.noise.empty()) {
        if (a.checkpoint.empty()) throw std::invalid_argument("--noise needs --checkpoint");
        const MlpModel model = load_checkpoint(a.checkpoint);
        m.add_input(a.checkpoint);
        m.config["noise"] = a.noise;
        for (const NoisePoint& p : noise_sweep(model, audit, a.noise, a.attacker, a.common.seed))
            csv << "noise," << fmt(p.sigma) << ',' << fmt(p.f1) << ',' << fmt(p.lambda_M.mean) << ','
                << fmt(p.lambda_M.std) << '\n';
    } else {
        if (a.train.empty() || a.dev.empty()) throw std::invalid_argument("--lambda needs --train and --dev");
        const Dataset train = load_input(m, a.train, schema);
        const Dataset dev = load_input(m, a.dev, schema);
        a.debias.tap = tap_from_string(a.tap);
        a.debias.seed = a.common.seed;
        const BaselineResult base = train_baseline(train, dev, a.debias.predictor, a.common.seed);
        m.config["lambda"] = a.lambdas;
        m.config["debias"] = debias_config_json(a.debias);
        const AuditSplit split = make_audit_split(audit, a.common.seed);
        for (double lambda : a.lambdas) {
            DebiasConfig c = a.debias;
            c.lambda_adv = lambda;
            const DebiasResult r = c.tap == Tap::input_mask ? adv_train_masked(train, dev, c) : adv_train(train, dev, c, &base);
            const ModelAudit ma = audit_model(split, predict_dataset(r, audit), a.attacker, a.common.seed);
            csv << "lambda," << fmt(lambda) << ',' << fmt(ma.performance.f1) << ',' << fmt(ma.lambda_M.mean) << ','
                << fmt(ma.lambda_M.std) << '\n';
        }
    }
    write_text(dir / "tradeoff.csv", csv.str());
    m.add_output(dir, "tradeoff.csv");
    finish(dir, m);
    std::cout << csv.str();
    return kExitOk;
}

// curve ------------------------------------------------------------------

struct CurveArgs {
    Common common;
    std::string data, schema;
    std::vector<double> grid{1.0, 0.9, 0.8, 0.7, 0.6, 0.5};
    AttackerConfig attacker;
    double tolerance = 0.01;
    bool macro = false;
};

int run_curve(const CurveArgs& a) {
    const fs::path dir = a.common.out_dir("curve");
    OutputLock lock(dir);
    RunManifest m;
    m.command = "curve";
    m.seed = a.common.seed;
    const Dataset d = load_input(m, a.data, a.schema);
    const F1Kind metric = a.macro ? F1Kind::macro : F1Kind::micro;
    m.config = {{"grid", a.grid}, {"tolerance", a.tolerance}, {"f1_metric", to_string(metric)},
                {"attacker", attacker_config_json(a.attacker)}};
    const AuditSplit s = make_audit_split(d, a.common.seed);
    std::ostringstream csv;
    csv << csv_header_line() << "target_f1,flip_prob,achieved_f1,lambda_D,lambda_D_std\n";
    for (const CurvePoint& p : audit_curve(s, a.grid, a.attacker, a.common.seed, a.tolerance, metric))
        csv << fmt(p.target_f1) << ',' << fmt(p.value.flip_prob) << ',' << fmt(p.value.mean_achieved_f1()) << ','
            << fmt(p.value.leakage.mean) << ',' << fmt(p.value.leakage.std) << '\n';
    write_text(dir / "curve.csv", csv.str());
    m.add_output(dir, "curve.csv");
    finish(dir, m);
    std::cout << csv.str();
    return kExitOk;
}

// perclass ---------------------------------------------------------------

struct PerClassArgs {
    Common common;
    std::string data, schema, before, after;
};

int run_perclass(const PerClassArgs& a) {
    const fs::path dir = a.common.out_dir("perclass");
    OutputLock lock(dir);
    RunManifest m;
    m.command = "perclass";
    const Dataset d = load_input(m, a.data, a.schema);
    const Predictions before = load_predictions(a.before);
    m.add_input(a.before);
    const Predictions after = load_predictions(a.after);
    m.add_input(a.after);
    const PerClassDelta delta = per_class_delta(before, after, d);
    write_text(dir / "perclass.csv", per_class_csv(delta));
    m.add_output(dir, "perclass.csv");
    ordered_json j;
    j["schema_version"] = kOutputSchemaVersion;
    j["labels"] = delta.rows.size();
    j["max_drop"] = delta.max_drop;
    j["mean_drop"] = delta.mean_drop;
    write_json(dir, "perclass.json", j, m);
    finish(dir, m);
    std::cout << "mean drop " << fmt(delta.mean_drop) << ", max drop " << fmt(delta.max_drop) << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"leakaudit: gender leakage audits, dataset balancing and adversarial debiasing"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    SynthArgs synth;
    auto* s = app.add_subcommand("synth", "generate a synthetic dataset with known leakage");
    add_common(s, synth.common);
    s->add_option("--config", synth.config, "synthetic config JSON")->check(CLI::ExistingFile);
    s->add_option("--split", synth.fractions, "train dev test fractions")->expected(3)->capture_default_str();
    s->add_option("--bayes-samples", synth.bayes_samples)->capture_default_str();

    AuditArgs audit;
    auto* a = app.add_subcommand("audit", "lambda_D, lambda_M and Delta on an audit set");
    add_common(a, audit.common);
    add_attacker(a, audit.attacker);
    a->add_option("--data", audit.data)->required()->check(CLI::ExistingFile);
    a->add_option("--schema", audit.schema, "schema JSON (default: schema.json next to --data)");
    a->add_option("--preds", audit.preds, "model logits JSONL")->check(CLI::ExistingFile);
    a->add_option("--tolerance", audit.tolerance)->capture_default_str();
    a->add_flag("--macro-f1", audit.macro, "match perturbed labels to the model's macro-F1");
    a->add_flag("--drop-infeasible", audit.drop_infeasible, "drop labels seen with one gender only");

    BalanceArgs bal;
    auto* b = app.add_subcommand("balance", "remove examples until every label meets alpha");
    add_common(b, bal.common);
    b->add_option("--data", bal.data)->required()->check(CLI::ExistingFile);
    b->add_option("--schema", bal.schema);
    b->add_option("--alpha", bal.options.alpha)->capture_default_str();
    b->add_option("--max-iters", bal.options.max_iters)->capture_default_str();
    b->add_flag("--drop-infeasible", bal.options.drop_infeasible);
    b->add_flag("--emit-subset", bal.emit_subset, "write the retained dataset");

    TrainArgs train;
    auto* t = app.add_subcommand("train", "train a task predictor");
    add_common(t, train.common);
    add_train(t, train.train);
    t->add_option("--data", train.data, "training set")->required()->check(CLI::ExistingFile);
    t->add_option("--dev", train.dev)->required()->check(CLI::ExistingFile);
    t->add_option("--schema", train.schema);
    t->add_option("--predict", train.predict, "datasets to write logits for")->check(CLI::ExistingFile);

    DebiasArgs deb;
    auto* d = app.add_subcommand("debias", "adversarially remove gender from a representation");
    add_common(d, deb.common);
    add_train(d, deb.config.predictor);
    d->add_option("--data", deb.data, "training set")->required()->check(CLI::ExistingFile);
    d->add_option("--dev", deb.dev)->required()->check(CLI::ExistingFile);
    d->add_option("--schema", deb.schema);
    d->add_option("--predict", deb.predict)->check(CLI::ExistingFile);
    d->add_option("--tap", deb.tap, "input_mask | hidden | embedding")->capture_default_str();
    d->add_option("--lambda", deb.config.lambda_adv)->capture_default_str();
    d->add_option("--beta", deb.config.beta_recon)->capture_default_str();
    d->add_option("--epochs", deb.config.adv_epochs, "adversarial epochs")->capture_default_str();
    d->add_option("--warmup", deb.config.critic_warmup_epochs)->capture_default_str();
    d->add_option("--critic-steps", deb.config.critic_steps)->capture_default_str();
    d->add_option("--predictor-lr", deb.config.predictor_lr)->capture_default_str();
    d->add_option("--critic-lr", deb.config.critic_lr)->capture_default_str();
    d->add_option("--mask-lr", deb.config.mask_lr)->capture_default_str();
    d->add_option("--reference-leakage", deb.reference, "baseline lambda_M; enables the weak-critic check");

    SweepArgs sw;
    auto* w = app.add_subcommand("sweep", "noise or lambda tradeoff curve");
    add_common(w, sw.common);
    add_attacker(w, sw.attacker);
    w->add_option("--data", sw.data, "audit set")->required()->check(CLI::ExistingFile);
    w->add_option("--schema", sw.schema);
    w->add_option("--checkpoint", sw.checkpoint, "predictor for --noise")->check(CLI::ExistingFile);
    w->add_option("--noise", sw.noise, "sigma values");
    w->add_option("--lambda", sw.lambdas, "adversarial weights");
    w->add_option("--train", sw.train)->check(CLI::ExistingFile);
    w->add_option("--dev", sw.dev)->check(CLI::ExistingFile);
    w->add_option("--tap", sw.tap)->capture_default_str();
    w->add_option("--epochs", sw.debias.adv_epochs)->capture_default_str();
    w->add_option("--warmup", sw.debias.critic_warmup_epochs)->capture_default_str();

    CurveArgs cur;
    auto* c = app.add_subcommand("curve", "lambda_D over a grid of perturbed-label F1 values");
    add_common(c, cur.common);
    add_attacker(c, cur.attacker);
    c->add_option("--data", cur.data)->required()->check(CLI::ExistingFile);
    c->add_option("--schema", cur.schema);
    c->add_option("--grid", cur.grid)->capture_default_str();
    c->add_option("--tolerance", cur.tolerance)->capture_default_str();
    c->add_flag("--macro-f1", cur.macro);

    PerClassArgs pc;
    auto* p = app.add_subcommand("perclass", "per-label F1 before and after debiasing");
    add_common(p, pc.common);
    p->add_option("--data", pc.data)->required()->check(CLI::ExistingFile);
    p->add_option("--schema", pc.schema);
    p->add_option("--before", pc.before)->required()->check(CLI::ExistingFile);
    p->add_option("--after", pc.after)->required()->check(CLI::ExistingFile);

    CLI11_PARSE(app, argc, argv);

    try {
        if (s->parsed()) return run_synth(synth, s->count("--seed") > 0);
        if (a->parsed()) return run_audit_cmd(audit);
        if (b->parsed()) return run_balance(bal);
        if (t->parsed()) return run_train(train);
        if (d->parsed()) return run_debias(deb);
        if (w->parsed()) return run_sweep(sw);
        if (c->parsed()) return run_curve(cur);
        if (p->parsed()) return run_perclass(pc);
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInvalid;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInvalid;
    } catch (const std::domain_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitBelowFloor;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    }
    return kExitError;
}
