#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "taskmaml/backbone.hpp"
#include "taskmaml/optimizer.hpp"
#include "taskmaml/parameters.hpp"
#include "taskmaml/task.hpp"

namespace taskmaml {

enum class GradientOrder { exact, first_order };

struct MetaConfig {
    double alpha = 0.03;
    double beta = 0.03;
    std::size_t inner_steps_train = 1;
    /// Tasks per meta-update; 0 means "number of attributes in the dataset".
    std::size_t meta_batch_size = 0;
    GradientOrder gradient_order = GradientOrder::exact;
    OptimizerKind outer_optimizer = OptimizerKind::adam;
    AdamSettings adam;
    std::size_t meta_iterations = 2000;
    std::size_t shots_train = 5;
    std::uint64_t seed = 0;
    /// Early stopping on held-out episodes; 0 disables it.
    std::size_t patience = 0;
    std::size_t validation_interval = 50;
    /// Worker threads for per-task work (results never depend on it).
    std::size_t threads = 1;

    MetaConfig resolved(std::size_t attribute_count) const;
    void validate() const;
};

/// Gradient descent on the support loss: `steps` updates of size alpha.
ParameterVector inner_update(const Objective& model, const ParameterVector& params, const LabeledBatch& support,
                             double alpha, std::size_t steps);

/// Test-time adaptation; identical to inner_update.
ParameterVector adapt(const Objective& model, const ParameterVector& theta, const LabeledBatch& support,
                      double alpha, std::size_t steps);

struct MetaGradientResult {
    ParameterVector gradient;
    double mean_support_loss = 0.0;  // at theta, before adaptation
    double mean_query_loss = 0.0;    // at the adapted parameters
};

/// Gradient w.r.t. theta of sum_i L(inner_update(theta, support_i); query_i).
///
/// Exact mode back-propagates through every inner step with Hessian-vector
/// products, v <- (I - alpha H_support(theta_k)) v; first-order mode drops
/// the Hessian terms. Task contributions are summed in episode order.
MetaGradientResult meta_gradient_with_losses(const Objective& model, const ParameterVector& params,
                                             std::span<const TaskEpisode> episodes, double alpha,
                                             std::size_t inner_steps, GradientOrder order,
                                             std::size_t threads = 1);

ParameterVector meta_gradient(const Objective& model, const ParameterVector& params,
                              std::span<const TaskEpisode> episodes, double alpha, std::size_t inner_steps,
                              GradientOrder order, std::size_t threads = 1);

struct ProgressRecord {
    std::size_t iteration = 0;  // 1-based
    double mean_support_loss = 0.0;
    double mean_query_loss = 0.0;
    double wall_ms = 0.0;
};

using ProgressSink = std::function<void(const ProgressRecord&)>;

/// Runs the meta-training loop from `init`.
ParameterVector meta_train(const Objective& model, ParameterVector init, const MetaConfig& config,
                           EpisodeSource& source, const ProgressSink& progress = {});

/// As above, starting from backbone.init_params(backbone.config().seed).
ParameterVector meta_train(const Backbone& backbone, const MetaConfig& config, EpisodeSource& source,
                           const ProgressSink& progress = {});

}  // namespace taskmaml
