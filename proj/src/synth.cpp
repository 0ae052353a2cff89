#include "leakaudit/synth.hpp"

#include "json.hpp"

#include <Eigen/QR>
#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

namespace leakaudit {

namespace {

constexpr int kMaxEnumeratedLabels = 20;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }
double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double log_add(double a, double b) {
    if (a == kNegInf) return b;
    if (b == kNegInf) return a;
    const double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

void require(bool ok, const std::string& message) {
    if (!ok) throw std::invalid_argument("synth config: " + message);
}

std::vector<double> ratios_of(const SynthConfig& c) {
    return c.label_gender_ratio.empty() ? std::vector<double>(static_cast<std::size_t>(c.n_labels), 1.0)
                                        : c.label_gender_ratio;
}

/// Probability of every non-empty label configuration (bit k of the index is
/// label k); entry 0 is the empty set and stays 0.
std::vector<double> config_probabilities(const std::vector<double>& prevalence) {
    const std::size_t L = prevalence.size();
    const std::size_t n = std::size_t{1} << L;
    std::vector<double> p(n, 1.0);
    for (std::size_t c = 0; c < n; ++c)
        for (std::size_t k = 0; k < L; ++k) p[c] *= (c >> k & 1) ? prevalence[k] : 1.0 - prevalence[k];
    const double z = 1.0 - p[0];
    p[0] = 0.0;
    for (double& v : p) v /= z;
    return p;
}

std::vector<double> config_logits(const std::vector<double>& theta) {
    const std::size_t n = std::size_t{1} << theta.size();
    std::vector<double> logit(n, 0.0);
    for (std::size_t c = 1; c < n; ++c) {
        const std::size_t low = static_cast<std::size_t>(__builtin_ctzll(c));
        logit[c] = logit[c & (c - 1)] + theta[low];
    }
    return logit;
}

struct LabelMarginals {
    std::vector<double> m;  // P(y_k = 1, M)
    std::vector<double> w;
};

LabelMarginals label_marginals(const std::vector<double>& pc, const std::vector<double>& theta) {
    const std::size_t L = theta.size();
    const auto logit = config_logits(theta);
    LabelMarginals out{std::vector<double>(L, 0.0), std::vector<double>(L, 0.0)};
    for (std::size_t c = 1; c < pc.size(); ++c) {
        const double pm = pc[c] * sigmoid(logit[c]);
        const double pw = pc[c] - pm;
        for (std::size_t k = 0; k < L; ++k) {
            if (c >> k & 1) {
                out.m[k] += pm;
                out.w[k] += pw;
            }
        }
    }
    return out;
}

std::vector<double> log_ratio_residual(const std::vector<double>& pc, const std::vector<double>& theta,
                                       const std::vector<double>& ratios, double* worst) {
    const auto mg = label_marginals(pc, theta);
    std::vector<double> r(theta.size());
    *worst = 0.0;
    for (std::size_t k = 0; k < theta.size(); ++k) {
        r[k] = std::log(ratios[k]) - std::log(mg.m[k] / mg.w[k]);
        *worst = std::max(*worst, std::abs(r[k]));
    }
    return r;
}

/// Newton on log(#(m,y_k)/#(w,y_k)) = log r_k with the exact Jacobian and a
/// backtracking line search on the largest residual.
std::vector<double> fit_theta(const std::vector<double>& pc, const std::vector<double>& ratios) {
    const std::size_t L = ratios.size();
    std::vector<double> theta(L, 0.0);
    double worst = 0.0;
    auto residual = log_ratio_residual(pc, theta, ratios, &worst);
    for (int it = 0; it < 200; ++it) {
        if (worst < 1e-12) return theta;
        const auto mg = label_marginals(pc, theta);
        const auto logit = config_logits(theta);
        Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(L), static_cast<Eigen::Index>(L));
        std::vector<int> on;
        for (std::size_t c = 1; c < pc.size(); ++c) {
            const double s = sigmoid(logit[c]);
            const double v = pc[c] * s * (1.0 - s);
            on.clear();
            for (std::size_t k = 0; k < L; ++k)
                if (c >> k & 1) on.push_back(static_cast<int>(k));
            for (int k : on)
                for (int j : on) a(k, j) += v;
        }
        for (std::size_t k = 0; k < L; ++k) a.row(static_cast<Eigen::Index>(k)) *= 1.0 / mg.m[k] + 1.0 / mg.w[k];
        const Eigen::VectorXd step = a.colPivHouseholderQr().solve(
            Eigen::Map<const Eigen::VectorXd>(residual.data(), static_cast<Eigen::Index>(L)));
        double t = 1.0;
        for (; t > 1e-6; t *= 0.5) {
            std::vector<double> trial = theta;
            for (std::size_t k = 0; k < L; ++k) trial[k] += t * step[static_cast<Eigen::Index>(k)];
            double trial_worst = 0.0;
            auto trial_res = log_ratio_residual(pc, trial, ratios, &trial_worst);
            if (trial_worst < worst) {
                theta = std::move(trial);
                residual = std::move(trial_res);
                worst = trial_worst;
                break;
            }
        }
        if (t <= 1e-6) break;
    }
    if (worst < 1e-9) return theta;
    throw std::invalid_argument("synth config: label_gender_ratio could not be fitted jointly (residual " +
                                std::to_string(worst) + ")");
}

struct Draw {
    std::vector<double> observed;  // signal + noise
    std::vector<double> proxy;
    std::vector<int> labels;
    Gender gender = Gender::M;
};

class Sampler {
public:
    Sampler(const SynthModel& model, std::uint64_t seed) : model_(model), rng_(seed) {}

    Draw next() {
        const auto& c = model_.config;
        const int S = c.signal_dims;
        Vector s(S);
        Draw d;
        for (;;) {
            for (int i = 0; i < S; ++i) s[i] = normal_(rng_);
            const Vector z = model_.directions * s;
            d.labels.clear();
            if (c.task_kind == TaskKind::multi_class) {
                Eigen::Index best = 0;
                z.maxCoeff(&best);
                d.labels.push_back(static_cast<int>(best));
            } else {
                for (int k = 0; k < c.n_labels; ++k)
                    if (z[k] > model_.thresholds[static_cast<std::size_t>(k)]) d.labels.push_back(k);
            }
            if (!d.labels.empty()) break;
        }
        d.gender = uniform_(rng_) < model_.p_male_given(d.labels) ? Gender::M : Gender::W;
        d.observed.resize(static_cast<std::size_t>(S));
        for (int i = 0; i < S; ++i) d.observed[static_cast<std::size_t>(i)] = s[i] + c.noise_sigma * normal_(rng_);
        d.proxy.resize(static_cast<std::size_t>(c.proxy_dims));
        const double b = d.gender == Gender::M ? 1.0 : -1.0;
        for (int j = 0; j < c.proxy_dims; ++j) {
            const int paired = j % c.n_labels;
            const double cue = d.gender == Gender::W && std::binary_search(d.labels.begin(), d.labels.end(), paired)
                                   ? c.proxy_label_coupling
                                   : 0.0;
            d.proxy[static_cast<std::size_t>(j)] =
                c.proxy_strength * (b + cue) + (1.0 - c.proxy_strength) * normal_(rng_);
        }
        return d;
    }

private:
    const SynthModel& model_;
    Rng rng_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace

void validate(const SynthConfig& c) {
    require(c.n_examples >= 2, "n_examples must be >= 2");
    require(c.n_labels >= (c.task_kind == TaskKind::multi_class ? 2 : 1), "too few labels");
    require(c.signal_dims >= c.n_labels, "signal_dims must be >= n_labels (one direction per label)");
    require(c.proxy_dims >= 0, "proxy_dims must be non-negative");
    require(c.task_kind == TaskKind::multi_class || c.n_labels <= kMaxEnumeratedLabels,
            "multi_label supports at most " + std::to_string(kMaxEnumeratedLabels) + " labels");
    require(c.label_gender_ratio.empty() || static_cast<int>(c.label_gender_ratio.size()) == c.n_labels,
            "label_gender_ratio needs one entry per label");
    for (double r : c.label_gender_ratio) require(std::isfinite(r) && r > 0.0, "label_gender_ratio entries must be positive");
    require(c.label_prevalence.empty() || static_cast<int>(c.label_prevalence.size()) == c.n_labels,
            "label_prevalence needs one entry per label");
    for (double p : c.label_prevalence) require(p > 0.0 && p < 1.0, "label_prevalence entries must lie in (0, 1)");
    require(c.proxy_strength >= 0.0 && c.proxy_strength <= 1.0, "proxy_strength must lie in [0, 1]");
    require(c.proxy_label_coupling >= 0.0 && c.proxy_label_coupling <= 1.0,
            "proxy_label_coupling must lie in [0, 1]");
    require(std::isfinite(c.noise_sigma) && c.noise_sigma >= 0.0, "noise_sigma must be >= 0");
}

double SynthModel::p_male_given(std::span<const int> labels) const {
    if (config.task_kind == TaskKind::multi_class) return p_male_given_class.at(static_cast<std::size_t>(labels[0]));
    double logit = 0.0;
    for (int l : labels) logit += theta[static_cast<std::size_t>(l)];
    return sigmoid(logit);
}

SynthModel build_synth_model(const SynthConfig& config) {
    validate(config);
    SynthModel m;
    m.config = config;
    const int L = config.n_labels;
    const int S = config.signal_dims;
    Rng rng(derive_seed(config.seed, "synth/structure"));
    std::normal_distribution<double> normal(0.0, 1.0);

    Matrix a(S, S);
    for (int i = 0; i < S; ++i)
        for (int j = 0; j < S; ++j) a(i, j) = normal(rng);
    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(a).householderQ();
    m.directions = q.leftCols(L).transpose();

    std::uniform_real_distribution<double> prev(0.15, 0.4);
    m.prevalence = config.label_prevalence;
    if (m.prevalence.empty())
        for (int k = 0; k < L; ++k) m.prevalence.push_back(prev(rng));

    const auto ratios = ratios_of(config);
    const boost::math::normal_distribution<double> std_normal;
    std::vector<double> p_label(static_cast<std::size_t>(L));
    std::vector<double> p_label_m(static_cast<std::size_t>(L));
    if (config.task_kind == TaskKind::multi_label) {
        for (double p : m.prevalence) m.thresholds.push_back(boost::math::quantile(std_normal, 1.0 - p));
        const auto pc = config_probabilities(m.prevalence);
        m.theta = fit_theta(pc, ratios);
        const auto mg = label_marginals(pc, m.theta);
        m.p_male = 0.0;
        const auto logit = config_logits(m.theta);
        for (std::size_t c = 1; c < pc.size(); ++c) m.p_male += pc[c] * sigmoid(logit[c]);
        for (int k = 0; k < L; ++k) {
            p_label_m[static_cast<std::size_t>(k)] = mg.m[static_cast<std::size_t>(k)];
            p_label[static_cast<std::size_t>(k)] = mg.m[static_cast<std::size_t>(k)] + mg.w[static_cast<std::size_t>(k)];
        }
    } else {
        m.p_male = 0.0;
        for (int k = 0; k < L; ++k) {
            const double r = ratios[static_cast<std::size_t>(k)];
            m.p_male_given_class.push_back(r / (1.0 + r));
            p_label[static_cast<std::size_t>(k)] = 1.0 / L;
            p_label_m[static_cast<std::size_t>(k)] = m.p_male_given_class.back() / L;
            m.p_male += p_label_m[static_cast<std::size_t>(k)];
        }
    }
    for (int k = 0; k < L; ++k) {
        const double em = config.n_examples * p_label_m[static_cast<std::size_t>(k)];
        const double ew = config.n_examples * (p_label[static_cast<std::size_t>(k)] - p_label_m[static_cast<std::size_t>(k)]);
        if (em < 0.5 || ew < 0.5) {
            std::ostringstream os;
            os << "synth config: label " << k << " expects " << em << " M / " << ew << " W examples at n_examples="
               << config.n_examples << "; ratio unachievable";
            throw std::invalid_argument(os.str());
        }
    }
    return m;
}

Dataset generate(const SynthConfig& config) {
    const SynthModel model = build_synth_model(config);
    Dataset d;
    d.schema.task_kind = config.task_kind;
    d.schema.feature_width = config.feature_width();
    for (int k = 0; k < config.n_labels; ++k) {
        char name[32];
        std::snprintf(name, sizeof name, "label_%02d", k);
        d.schema.labels.emplace_back(name);
    }
    Sampler sampler(model, derive_seed(config.seed, "synth/examples"));
    const int width = static_cast<int>(std::to_string(config.n_examples).size());
    d.examples.reserve(static_cast<std::size_t>(config.n_examples));
    for (int i = 0; i < config.n_examples; ++i) {
        Draw draw = sampler.next();
        Example e;
        std::string num = std::to_string(i);
        e.id = "syn" + std::string(static_cast<std::size_t>(width) - num.size(), '0') + num;
        draw.observed.insert(draw.observed.end(), draw.proxy.begin(), draw.proxy.end());
        e.features = std::move(draw.observed);
        e.labels = std::move(draw.labels);
        e.gender = draw.gender;
        d.examples.push_back(std::move(e));
    }
    return d;
}

double bayes_label_accuracy(const SynthConfig& config) {
    const SynthModel m = build_synth_model(config);
    const double pm = m.p_male;
    double acc = 0.0;
    if (config.task_kind == TaskKind::multi_class) {
        for (double q : m.p_male_given_class) {
            const double py = 1.0 / config.n_labels;
            acc += std::max(py * q / pm, py * (1.0 - q) / (1.0 - pm));
        }
    } else {
        const auto pc = config_probabilities(m.prevalence);
        const auto logit = config_logits(m.theta);
        for (std::size_t c = 1; c < pc.size(); ++c) {
            const double q = sigmoid(logit[c]);
            acc += std::max(pc[c] * q / pm, pc[c] * (1.0 - q) / (1.0 - pm));
        }
    }
    return 0.5 * acc;
}

BayesAccuracy bayes_gender_accuracy(const SynthConfig& config, int feature_samples) {
    if (feature_samples < 1) throw std::invalid_argument("feature_samples must be >= 1");
    const SynthModel m = build_synth_model(config);
    BayesAccuracy out;
    out.from_labels = bayes_label_accuracy(config);

    const auto& c = config;
    if (c.proxy_dims > 0 && c.proxy_strength == 1.0) {
        out.from_features = 1.0;  // noiseless proxy sign
        return out;
    }
    const int L = c.n_labels;
    const double s2 = c.noise_sigma * c.noise_sigma;
    const double tau = std::sqrt(s2 / (1.0 + s2));
    const double proxy_sd = 1.0 - c.proxy_strength;
    const double pm = m.p_male;

    // log P(Y = config | observed signal) for every config.
    const std::size_t n_cfg = c.task_kind == TaskKind::multi_label ? (std::size_t{1} << L) : static_cast<std::size_t>(L);
    std::vector<double> log_q1(static_cast<std::size_t>(L)), log_q0(static_cast<std::size_t>(L));
    std::vector<double> log_py(n_cfg);
    std::vector<double> log_pm(n_cfg), log_pw(n_cfg);
    std::vector<std::vector<int>> cfg_labels(n_cfg);
    for (std::size_t k = 0; k < n_cfg; ++k) {
        if (c.task_kind == TaskKind::multi_class) {
            cfg_labels[k] = {static_cast<int>(k)};
        } else {
            for (int b = 0; b < L; ++b)
                if (k >> b & 1) cfg_labels[k].push_back(b);
        }
        if (cfg_labels[k].empty()) continue;
        const double q = m.p_male_given(cfg_labels[k]);
        log_pm[k] = std::log(q);
        log_pw[k] = std::log1p(-q);
    }

    constexpr int kGrid = 321;
    Sampler sampler(m, derive_seed(c.seed, "synth/bayes"));
    double hit_m = 0.0, hit_w = 0.0, mass_m = 0.0, mass_w = 0.0;
    for (int n = 0; n < feature_samples; ++n) {
        const Draw d = sampler.next();
        Vector xs = Eigen::Map<const Vector>(d.observed.data(), c.signal_dims);
        const Vector mu = m.directions * xs / (1.0 + s2);

        if (c.task_kind == TaskKind::multi_label) {
            for (int k = 0; k < L; ++k) {
                const double t = m.thresholds[static_cast<std::size_t>(k)];
                double q1;
                if (tau > 0.0) {
                    q1 = normal_cdf((mu[k] - t) / tau);
                } else {
                    q1 = mu[k] > t ? 1.0 : 0.0;
                }
                log_q1[static_cast<std::size_t>(k)] = q1 > 0.0 ? std::log(q1) : kNegInf;
                log_q0[static_cast<std::size_t>(k)] = q1 < 1.0 ? std::log1p(-q1) : kNegInf;
            }
            log_py[0] = kNegInf;
            for (std::size_t cf = 1; cf < n_cfg; ++cf) {
                double v = 0.0;
                for (int k = 0; k < L; ++k) v += (cf >> k & 1) ? log_q1[static_cast<std::size_t>(k)] : log_q0[static_cast<std::size_t>(k)];
                log_py[cf] = v;
            }
        } else {
            for (int k = 0; k < L; ++k) {
                double p;
                if (tau > 0.0) {
                    p = 0.0;
                    const double h = 16.0 / (kGrid - 1);
                    for (int g = 0; g < kGrid; ++g) {
                        const double z = -8.0 + h * g;
                        double f = std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
                        for (int j = 0; j < L; ++j)
                            if (j != k) f *= normal_cdf((mu[k] + tau * z - mu[j]) / tau);
                        p += (g == 0 || g == kGrid - 1 ? 0.5 : 1.0) * f * h;
                    }
                } else {
                    Eigen::Index best = 0;
                    mu.maxCoeff(&best);
                    p = best == k ? 1.0 : 0.0;
                }
                log_py[static_cast<std::size_t>(k)] = p > 0.0 ? std::log(p) : kNegInf;
            }
        }

        double a_m = kNegInf, a_w = kNegInf;
        for (std::size_t cf = 0; cf < n_cfg; ++cf) {
            if (cfg_labels[cf].empty() || log_py[cf] == kNegInf) continue;
            double lm = log_py[cf] + log_pm[cf];
            double lw = log_py[cf] + log_pw[cf];
            if (c.proxy_dims > 0 && c.proxy_strength > 0.0) {
                for (int j = 0; j < c.proxy_dims; ++j) {
                    const double x = d.proxy[static_cast<std::size_t>(j)];
                    const bool has = std::binary_search(cfg_labels[cf].begin(), cfg_labels[cf].end(), j % L);
                    const double mean_m = c.proxy_strength;
                    const double mean_w = c.proxy_strength * (-1.0 + (has ? c.proxy_label_coupling : 0.0));
                    lm -= 0.5 * (x - mean_m) * (x - mean_m) / (proxy_sd * proxy_sd);
                    lw -= 0.5 * (x - mean_w) * (x - mean_w) / (proxy_sd * proxy_sd);
                }
            }
            a_m = log_add(a_m, lm);
            a_w = log_add(a_w, lw);
        }
        const double post_m = 1.0 / (1.0 + std::exp(a_w - a_m));
        // self-normalised per gender so the estimate stays in [0, 1]
        const bool says_m = post_m / pm >= (1.0 - post_m) / (1.0 - pm);
        mass_m += post_m;
        mass_w += 1.0 - post_m;
        (says_m ? hit_m : hit_w) += says_m ? post_m : 1.0 - post_m;
    }
    out.from_features = 0.5 * (hit_m / mass_m + hit_w / mass_w);
    return out;
}

// ---------------------------------------------------------------------------

std::string synth_config_to_json(const SynthConfig& c) {
    nlohmann::ordered_json j;
    j["schema_version"] = 1;
    j["n_examples"] = c.n_examples;
    j["n_labels"] = c.n_labels;
    j["task_kind"] = to_string(c.task_kind);
    j["signal_dims"] = c.signal_dims;
    j["proxy_dims"] = c.proxy_dims;
    j["label_gender_ratio"] = c.label_gender_ratio;
    j["proxy_strength"] = c.proxy_strength;
    j["proxy_label_coupling"] = c.proxy_label_coupling;
    j["noise_sigma"] = c.noise_sigma;
    j["label_prevalence"] = c.label_prevalence;
    j["seed"] = c.seed;
    return j.dump(2);
}

SynthConfig synth_config_from_json(const std::string& text) {
    SynthConfig c;
    try {
        const auto j = nlohmann::json::parse(text);
        if (!j.is_object()) throw std::invalid_argument("synth config: expected a JSON object");
        static const std::set<std::string> known = {
            "schema_version", "n_examples", "n_labels", "task_kind", "signal_dims", "proxy_dims", "label_gender_ratio",
            "proxy_strength", "proxy_label_coupling", "noise_sigma", "label_prevalence", "seed"};
        for (const auto& [key, value] : j.items())
            if (!known.count(key)) throw std::invalid_argument("synth config: unknown key '" + key + "'");
        if (j.value("schema_version", 1) != 1)
            throw std::invalid_argument("synth config: unsupported schema_version " + j["schema_version"].dump());
        c.n_examples = j.value("n_examples", c.n_examples);
        c.n_labels = j.value("n_labels", c.n_labels);
        c.task_kind = task_kind_from_string(j.value("task_kind", to_string(c.task_kind)));
        c.signal_dims = j.value("signal_dims", c.signal_dims);
        c.proxy_dims = j.value("proxy_dims", c.proxy_dims);
        c.label_gender_ratio = j.value("label_gender_ratio", c.label_gender_ratio);
        c.proxy_strength = j.value("proxy_strength", c.proxy_strength);
        c.proxy_label_coupling = j.value("proxy_label_coupling", c.proxy_label_coupling);
        c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
        c.label_prevalence = j.value("label_prevalence", c.label_prevalence);
        c.seed = j.value("seed", c.seed);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("synth config: ") + e.what());
    }
    validate(c);
    return c;
}

SynthConfig load_synth_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::invalid_argument("cannot open " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return synth_config_from_json(ss.str());
}

}  // namespace leakaudit
