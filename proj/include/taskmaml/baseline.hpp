#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "taskmaml/backbone.hpp"
#include "taskmaml/meta.hpp"
#include "taskmaml/optimizer.hpp"
#include "taskmaml/taskbank.hpp"

namespace taskmaml {

inline const std::string kMergedAttribute = "any";

/// One-attribute dataset whose label is the OR of the source attributes.
struct MergedDataset {
    Dataset data;  // attributes == {kMergedAttribute}
    std::vector<std::string> source_attributes;

    std::int8_t merged_label(std::size_t row) const { return data.label(row, 0); }
};

/// Positive iff any listed attribute is positive; unlabeled iff none is labeled.
/// Duplicate names are ignored and order does not matter.
MergedDataset merge_labels(const Dataset& dataset, const std::vector<std::string>& training_attributes);

struct BaselineConfig {
    double beta = 0.03;
    OptimizerKind optimizer = OptimizerKind::adam;
    AdamSettings adam;
    /// Positives and negatives per mini-batch.
    std::size_t batch_per_class = 5;
    /// Gradient steps; unset means meta_iterations x meta_batch_size of the paired meta run.
    std::optional<std::size_t> iterations;
    std::uint64_t seed = 0;

    /// Fills the unset fields from the meta-training configuration.
    static BaselineConfig matching(const MetaConfig& meta);
    std::size_t resolved_iterations(const MetaConfig& meta) const;
};

/// Conventional balanced mini-batch training on the merged labels.
ParameterVector train_baseline(const Backbone& backbone, ParameterVector init, const MergedDataset& merged,
                               std::size_t iterations, const BaselineConfig& config,
                               const ProgressSink& progress = {});

ParameterVector train_baseline(const Backbone& backbone, const MergedDataset& merged, std::size_t iterations,
                               const BaselineConfig& config, const ProgressSink& progress = {});

/// Training set for a fold: every subject but the held-out one, all plan attributes merged.
MergedDataset baseline_training_set(const Dataset& dataset, const SplitPlan& plan);

}  // namespace taskmaml
