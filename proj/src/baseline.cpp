#include "taskmaml/baseline.hpp"

#include <algorithm>
#include <chrono>
#include <set>

#include "taskmaml/errors.hpp"

namespace taskmaml {

MergedDataset merge_labels(const Dataset& dataset, const std::vector<std::string>& training_attributes) {
    if (training_attributes.empty()) throw ConfigError("merge_labels: empty attribute list");
    std::set<std::size_t> attrs;
    for (const auto& a : training_attributes) attrs.insert(dataset.attribute_index(a));

    MergedDataset out;
    for (auto a : attrs) out.source_attributes.push_back(dataset.attributes[a]);
    out.data.shape = dataset.shape;
    out.data.subjects = dataset.subjects;
    out.data.attributes = {kMergedAttribute};
    out.data.examples = dataset.examples;
    out.data.payload = dataset.payload;
    out.data.labels.resize(dataset.examples.size());
    for (std::size_t r = 0; r < dataset.examples.size(); ++r) {
        std::int8_t merged = kUnlabeled;
        for (auto a : attrs) {
            const auto v = dataset.label(r, a);
            if (v == 1) {
                merged = 1;
                break;
            }
            if (v == 0) merged = 0;
        }
        out.data.labels[r] = merged;
    }
    return out;
}

BaselineConfig BaselineConfig::matching(const MetaConfig& meta) {
    BaselineConfig out;
    out.beta = meta.beta;
    out.optimizer = meta.outer_optimizer;
    out.adam = meta.adam;
    out.batch_per_class = meta.shots_train;
    out.seed = meta.seed;
    return out;
}

std::size_t BaselineConfig::resolved_iterations(const MetaConfig& meta) const {
    return iterations.value_or(meta.meta_iterations * meta.meta_batch_size);
}

namespace {

std::vector<std::size_t> draw(const std::vector<std::size_t>& pool, std::size_t count, Rng& rng) {
    std::vector<std::size_t> out;
    out.reserve(count);
    if (pool.size() >= count) {
        std::vector<std::size_t> tmp = pool;
        for (std::size_t i = 0; i < count; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, tmp.size() - 1);
            std::swap(tmp[i], tmp[pick(rng)]);
            out.push_back(tmp[i]);
        }
    } else {
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        for (std::size_t i = 0; i < count; ++i) out.push_back(pool[pick(rng)]);
    }
    return out;
}

}  // namespace

ParameterVector train_baseline(const Backbone& backbone, ParameterVector init, const MergedDataset& merged,
                               std::size_t iterations, const BaselineConfig& config, const ProgressSink& progress) {
    if (config.batch_per_class < 1) throw ConfigError("baseline.batch_per_class must be >= 1");
    if (!(config.beta > 0.0)) throw ConfigError("baseline.beta must be > 0");
    std::vector<std::size_t> positives, negatives;
    for (std::size_t r = 0; r < merged.data.examples.size(); ++r) {
        const auto v = merged.merged_label(r);
        if (v == 1) positives.push_back(r);
        if (v == 0) negatives.push_back(r);
    }
    if (positives.empty() && negatives.empty()) throw SamplingError("train_baseline: merged dataset is empty");
    if (positives.empty() || negatives.empty()) {
        throw SamplingError("train_baseline: merged labels contain a single class; balanced batches impossible");
    }
    ParameterVector theta = std::move(init);
    if (iterations == 0) return theta;

    Rng rng = derive_rng(config.seed, {0x62617365ULL});
    Optimizer optimizer(config.optimizer, config.beta, config.adam);
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t it = 1; it <= iterations; ++it) {
        auto rows = draw(positives, config.batch_per_class, rng);
        auto neg = draw(negatives, config.batch_per_class, rng);
        rows.insert(rows.end(), neg.begin(), neg.end());
        const auto batch = make_batch(merged.data, rows, 0);
        auto lg = backbone.loss_and_gradient(theta, batch);
        optimizer.step(theta, lg.gradient);
        if (progress) {
            const double after = backbone.loss(theta, batch);
            const double ms =
                std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
            progress({it, lg.loss, after, ms});
        }
    }
    return theta;
}

ParameterVector train_baseline(const Backbone& backbone, const MergedDataset& merged, std::size_t iterations,
                               const BaselineConfig& config, const ProgressSink& progress) {
    return train_baseline(backbone, backbone.init_params(backbone.config().seed), merged, iterations, config,
                          progress);
}

MergedDataset baseline_training_set(const Dataset& dataset, const SplitPlan& plan) {
    std::vector<std::string> subjects;
    for (const auto& s : dataset.subjects) {
        if (!plan.held_out_subject || s != *plan.held_out_subject) subjects.push_back(s);
    }
    const Dataset train = subset(dataset, subjects, dataset.attributes);
    return merge_labels(train, train.attributes);
}

}  // namespace taskmaml
