#pragma once

// Synthetic feature datasets with controllable label/gender co-occurrence and
// unlabeled gender-proxy features.
//
// Generative model (signal s ~ N(0, I_S), orthonormal label directions u_k):
//   multi_label  y_k = [u_k . s > t_k], t_k = quantile for the label prevalence;
//                empty label sets are resampled.
//   multi_class  y = argmax_k u_k . s.
//   gender       P(M | Y) = sigmoid(sum_k theta_k y_k), theta fitted so the expected
//                #(m,y_k) / #(w,y_k) equals label_gender_ratio[k]
//                (multi_class: P(M | y = k) = r_k / (1 + r_k)).
//   features     [s + noise_sigma * eps,  proxy], with proxy dim j =
//                strength * (b + coupling * [W] * y_{j mod L}) + (1 - strength) * eps,
//                b = +1 for M and -1 for W.

#include "leakaudit/dataset.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace leakaudit {

struct SynthConfig {
    int n_examples = 1000;
    int n_labels = 8;
    TaskKind task_kind = TaskKind::multi_label;
    int signal_dims = 8;
    int proxy_dims = 0;
    /// Per-label target #(m,y)/#(w,y); empty means all 1.
    std::vector<double> label_gender_ratio;
    double proxy_strength = 0.0;
    /// Extra shift of women's proxy dims when the paired label is present.
    double proxy_label_coupling = 0.0;
    double noise_sigma = 0.0;
    /// Multi-label marginal prevalence per label; empty means Uniform(0.15, 0.4) draws.
    std::vector<double> label_prevalence;
    std::uint64_t seed = 0;

    int feature_width() const { return signal_dims + proxy_dims; }
    bool operator==(const SynthConfig&) const = default;
};

/// Throws std::invalid_argument naming the offending field.
void validate(const SynthConfig& config);

SynthConfig load_synth_config(const std::filesystem::path& path);
std::string synth_config_to_json(const SynthConfig& config);
SynthConfig synth_config_from_json(const std::string& text);

/// Closed-form parameters shared by generate and the Bayes oracle.
struct SynthModel {
    SynthConfig config;
    Matrix directions;  // n_labels x signal_dims, orthonormal rows
    std::vector<double> prevalence;
    std::vector<double> thresholds;
    std::vector<double> theta;  // multi_label gender weights
    std::vector<double> p_male_given_class;  // multi_class
    double p_male = 0.5;

    /// P(M | label set); `labels` sorted indices.
    double p_male_given(std::span<const int> labels) const;
};

/// Throws when the configured ratios leave some label with an expected
/// per-gender count below one half.
SynthModel build_synth_model(const SynthConfig& config);

Dataset generate(const SynthConfig& config);

struct BayesAccuracy {
    /// From the ground-truth label vector alone (exact enumeration).
    double from_labels = 0.5;
    /// From the full feature vector: exact posterior per sample, averaged over
    /// `feature_samples` draws from the generative model.
    double from_features = 0.5;
};

/// Both values refer to a gender-balanced population.
BayesAccuracy bayes_gender_accuracy(const SynthConfig& config, int feature_samples = 4000);

/// Exact label-based Bayes accuracy only (cheap).
double bayes_label_accuracy(const SynthConfig& config);

}  // namespace leakaudit
