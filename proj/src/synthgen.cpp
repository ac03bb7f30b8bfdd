#include "taskmaml/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "taskmaml/errors.hpp"

namespace taskmaml {

void SynthConfig::validate() const {
    if (n_subjects < 1) throw ConfigError("synth.n_subjects must be >= 1");
    if (n_attributes < 1) throw ConfigError("synth.n_attributes must be >= 1");
    if (examples_per_subject < 1) throw ConfigError("synth.examples_per_subject must be >= 1");
    if (feature_dim < 1) throw ConfigError("synth.feature_dim must be >= 1");
    if (!(positive_rate_min > 0.0 && positive_rate_min < 1.0)) {
        throw ConfigError("synth.positive_rate_min must lie in (0,1)");
    }
    if (!(positive_rate_max > 0.0 && positive_rate_max < 1.0)) {
        throw ConfigError("synth.positive_rate_max must lie in (0,1)");
    }
    if (positive_rate_min > positive_rate_max) {
        throw ConfigError("synth.positive_rate_min exceeds synth.positive_rate_max");
    }
    if (!(attribute_overlap >= 0.0 && attribute_overlap <= 1.0)) {
        throw ConfigError("synth.attribute_overlap must lie in [0,1]");
    }
    if (subject_shift_scale < 0.0) throw ConfigError("synth.subject_shift_scale must be >= 0");
    if (noise_scale < 0.0) throw ConfigError("synth.noise_scale must be >= 0");
    if (render_image) {
        const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(feature_dim))));
        if (side * side != feature_dim) throw ConfigError("synth.render_image needs a square feature_dim");
    }
    const double n = static_cast<double>(examples_per_subject);
    if (std::ceil(positive_rate_min * n - 1e-9) > std::floor(positive_rate_max * n + 1e-9)) {
        throw ConfigError("synth.positive_rate_min/max: no integer positive count fits " +
                          std::to_string(examples_per_subject) + " examples per subject");
    }
}

namespace {

std::vector<double> gaussian(std::size_t d, double scale, Rng& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<double> v(d);
    for (auto& x : v) x = scale * dist(rng);
    return v;
}

std::vector<double> normalized(std::vector<double> v) {
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    if (n == 0.0) {
        v[0] = 1.0;
        return v;
    }
    for (auto& x : v) x /= n;
    return v;
}

std::vector<double> mix(const std::vector<double>& shared, const std::vector<double>& own, double overlap) {
    std::vector<double> out(shared.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = overlap * shared[i] + (1.0 - overlap) * own[i];
    return normalized(std::move(out));
}

double dotp(const std::vector<double>& a, const double* b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

std::string label(const char* prefix, std::size_t i, std::size_t width) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s%0*zu", prefix, static_cast<int>(width), i);
    return buf;
}

}  // namespace

SynthBank generate_bank_detailed(const SynthConfig& config) {
    config.validate();
    const std::size_t d = config.feature_dim;
    const std::size_t ns = config.n_subjects, na = config.n_attributes, ne = config.examples_per_subject;
    Rng rng(config.seed);

    SynthBank bank;
    const auto w0 = normalized(gaussian(d, 1.0, rng));
    const auto u0 = normalized(gaussian(d, 1.0, rng));
    for (std::size_t a = 0; a < na; ++a) {
        AttributeRule rule;
        rule.linear = mix(w0, normalized(gaussian(d, 1.0, rng)), config.attribute_overlap);
        rule.quadratic = mix(u0, normalized(gaussian(d, 1.0, rng)), config.attribute_overlap);
        bank.rules.push_back(std::move(rule));
    }
    for (std::size_t s = 0; s < ns; ++s) bank.subject_offsets.push_back(gaussian(d, config.subject_shift_scale, rng));

    // prevalence: subject-level and task-level uniforms blended by the overlap
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<double> subject_u(ns), task_u(ns * na);
    for (auto& x : subject_u) x = unit(rng);
    for (auto& x : task_u) x = unit(rng);

    Dataset& ds = bank.dataset;
    if (config.render_image) {
        const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(d))));
        ds.shape = InputShape::image(side, side, 1);
    } else {
        ds.shape = InputShape::vector(d);
    }
    const std::size_t sw = ns < 100 ? 2 : 4;
    const std::size_t ew = ne < 10000 ? 4 : 8;
    for (std::size_t s = 0; s < ns; ++s) ds.subjects.push_back(label("S", s, sw));
    for (std::size_t a = 0; a < na; ++a) ds.attributes.push_back(label("A", a, 2));
    ds.payload.resize(ns * ne * d);
    ds.labels.assign(ns * ne * na, 0);
    bank.thresholds.resize(ns * na);

    std::normal_distribution<double> normal(0.0, 1.0);
    const double n = static_cast<double>(ne);
    const auto min_count = static_cast<std::size_t>(std::ceil(config.positive_rate_min * n - 1e-9));
    const auto max_count = static_cast<std::size_t>(std::floor(config.positive_rate_max * n + 1e-9));
    std::vector<double> centred(ne * d);
    std::vector<double> score(ne);
    std::vector<std::size_t> order(ne);
    for (std::size_t s = 0; s < ns; ++s) {
        const auto& mu = bank.subject_offsets[s];
        for (std::size_t e = 0; e < ne; ++e) {
            const std::size_t row = s * ne + e;
            ds.examples.push_back({label("S", s, sw) + "_e" + label("", e, ew), s});
            for (std::size_t j = 0; j < d; ++j) {
                const double z = normal(rng);
                centred[e * d + j] = z;
                ds.payload[row * d + j] = static_cast<float>(z + mu[j]);
            }
        }
        for (std::size_t a = 0; a < na; ++a) {
            const auto& rule = bank.rules[a];
            for (std::size_t e = 0; e < ne; ++e) {
                const double* z = centred.data() + e * d;
                const double q = dotp(rule.quadratic, z);
                score[e] = dotp(rule.linear, z) + config.nonlinear_scale * (q * q - 1.0) +
                           config.noise_scale * normal(rng);
            }
            const double blend =
                config.attribute_overlap * subject_u[s] + (1.0 - config.attribute_overlap) * task_u[s * na + a];
            const double rate =
                config.positive_rate_min + (config.positive_rate_max - config.positive_rate_min) * blend;
            const auto count = std::clamp(static_cast<std::size_t>(std::llround(rate * n)), min_count, max_count);
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return score[x] > score[y]; });
            for (std::size_t i = 0; i < count; ++i) ds.labels[(s * ne + order[i]) * na + a] = 1;
            const double above = score[order[count - 1]];
            const double below = count < ne ? score[order[count]] : above - 1.0;
            bank.thresholds[s * na + a] = 0.5 * (above + below);
        }
    }
    ds.validate();
    return bank;
}

Dataset generate_bank(const SynthConfig& config) { return generate_bank_detailed(config).dataset; }

}  // namespace taskmaml
