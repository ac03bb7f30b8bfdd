#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "taskmaml/taskbank.hpp"

namespace taskmaml {

struct SynthConfig {
    std::size_t n_subjects = 8;
    std::size_t n_attributes = 6;
    std::size_t examples_per_subject = 200;
    std::size_t feature_dim = 16;
    double subject_shift_scale = 1.0;
    /// 1 = every attribute shares one rule, 0 = independent rules.
    double attribute_overlap = 0.3;
    double positive_rate_min = 0.05;
    double positive_rate_max = 0.4;
    double noise_scale = 0.1;
    /// Weight of the quadratic term in each attribute rule.
    double nonlinear_scale = 0.5;
    /// Emit image payloads (feature vector as a sqrt(d) x sqrt(d) x 1 grid).
    bool render_image = false;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Per-attribute decision rule: score(z) = w.z + nonlinear_scale * ((u.z)^2 - 1).
struct AttributeRule {
    std::vector<double> linear;
    std::vector<double> quadratic;
};

struct SynthBank {
    Dataset dataset;
    std::vector<AttributeRule> rules;
    std::vector<std::vector<double>> subject_offsets;
    /// thresholds[s * n_attributes + a]: labels are noisy score > threshold.
    std::vector<double> thresholds;
};

/// Task bank whose labels come from subject-centred attribute rules.
SynthBank generate_bank_detailed(const SynthConfig& config);
Dataset generate_bank(const SynthConfig& config);

}  // namespace taskmaml
