#include "taskmaml/meta.hpp"

#include <chrono>
#include <limits>

#include "taskmaml/errors.hpp"
#include "taskmaml/parallel.hpp"

namespace taskmaml {

MetaConfig MetaConfig::resolved(std::size_t attribute_count) const {
    MetaConfig out = *this;
    if (out.meta_batch_size == 0) out.meta_batch_size = attribute_count;
    return out;
}

void MetaConfig::validate() const {
    if (!(alpha >= 0.0)) throw ConfigError("meta.alpha must be >= 0");
    if (!(beta > 0.0)) throw ConfigError("meta.beta must be > 0");
    if (inner_steps_train < 1) throw ConfigError("meta.inner_steps_train must be >= 1");
    if (meta_batch_size < 1) throw ConfigError("meta.meta_batch_size must be >= 1");
    if (shots_train < 1) throw ConfigError("meta.shots_train must be >= 1");
    if (patience > 0 && validation_interval < 1) throw ConfigError("meta.validation_interval must be >= 1");
}

ParameterVector inner_update(const Objective& model, const ParameterVector& params, const LabeledBatch& support,
                             double alpha, std::size_t steps) {
    ParameterVector theta = params;
    for (std::size_t s = 0; s < steps; ++s) theta.axpy(-alpha, model.gradient(theta, support));
    return theta;
}

ParameterVector adapt(const Objective& model, const ParameterVector& theta, const LabeledBatch& support,
                      double alpha, std::size_t steps) {
    return inner_update(model, theta, support, alpha, steps);
}

namespace {

struct TaskContribution {
    ParameterVector gradient;
    double support_loss = 0.0;
    double query_loss = 0.0;
};

TaskContribution task_meta_gradient(const Objective& model, const ParameterVector& params,
                                    const TaskEpisode& episode, double alpha, std::size_t steps,
                                    GradientOrder order) {
    TaskContribution out;
    std::vector<ParameterVector> trajectory;
    trajectory.reserve(steps);
    ParameterVector theta = params;
    for (std::size_t s = 0; s < steps; ++s) {
        auto lg = model.loss_and_gradient(theta, episode.support);
        if (s == 0) out.support_loss = lg.loss;
        if (order == GradientOrder::exact) trajectory.push_back(theta);
        theta.axpy(-alpha, lg.gradient);
    }
    if (steps == 0) out.support_loss = model.loss(theta, episode.support);
    auto query = model.loss_and_gradient(theta, episode.query);
    out.query_loss = query.loss;
    out.gradient = std::move(query.gradient);
    if (order == GradientOrder::exact) {
        for (std::size_t s = steps; s-- > 0;) {
            out.gradient.axpy(-alpha, model.hessian_vector_product(trajectory[s], episode.support, out.gradient));
        }
    }
    return out;
}

}  // namespace

MetaGradientResult meta_gradient_with_losses(const Objective& model, const ParameterVector& params,
                                             std::span<const TaskEpisode> episodes, double alpha,
                                             std::size_t inner_steps, GradientOrder order, std::size_t threads) {
    if (episodes.empty()) throw Error("meta_gradient: empty episode list");
    std::vector<TaskContribution> parts(episodes.size());
    parallel_for(episodes.size(), threads, [&](std::size_t i) {
        parts[i] = task_meta_gradient(model, params, episodes[i], alpha, inner_steps, order);
    });
    MetaGradientResult result;
    result.gradient = params.zeros_like();
    for (const auto& part : parts) {
        result.gradient += part.gradient;
        result.mean_support_loss += part.support_loss;
        result.mean_query_loss += part.query_loss;
    }
    const double n = static_cast<double>(parts.size());
    result.mean_support_loss /= n;
    result.mean_query_loss /= n;
    return result;
}

ParameterVector meta_gradient(const Objective& model, const ParameterVector& params,
                              std::span<const TaskEpisode> episodes, double alpha, std::size_t inner_steps,
                              GradientOrder order, std::size_t threads) {
    return meta_gradient_with_losses(model, params, episodes, alpha, inner_steps, order, threads).gradient;
}

namespace {

double validation_loss(const Objective& model, const ParameterVector& theta,
                       const std::vector<TaskEpisode>& episodes, const MetaConfig& config) {
    std::vector<double> losses(episodes.size());
    parallel_for(episodes.size(), config.threads, [&](std::size_t i) {
        auto adapted = inner_update(model, theta, episodes[i].support, config.alpha, config.inner_steps_train);
        losses[i] = model.loss(adapted, episodes[i].query);
    });
    double total = 0.0;
    for (double l : losses) total += l;
    return total / static_cast<double>(losses.size());
}

}  // namespace

ParameterVector meta_train(const Objective& model, ParameterVector init, const MetaConfig& config,
                           EpisodeSource& source, const ProgressSink& progress) {
    config.validate();
    ParameterVector theta = std::move(init);
    if (config.meta_iterations == 0) return theta;

    Rng rng = derive_rng(config.seed, {0x6d657461ULL});
    Optimizer optimizer(config.outer_optimizer, config.beta, config.adam);

    std::vector<TaskEpisode> validation;
    ParameterVector best = theta;
    double best_loss = std::numeric_limits<double>::infinity();
    std::size_t stale = 0;
    if (config.patience > 0) {
        Rng vrng = derive_rng(config.seed, {0x76616c69ULL});
        try {
            validation = source.sample(config.meta_batch_size, vrng);
        } catch (const TaskSourceExhausted& e) {
            throw TaskSourceExhausted("meta_train validation draw: " + e.message(), 0);
        }
        best_loss = validation_loss(model, theta, validation, config);
    }

    const auto start = std::chrono::steady_clock::now();
    for (std::size_t it = 1; it <= config.meta_iterations; ++it) {
        std::vector<TaskEpisode> episodes;
        try {
            episodes = source.sample(config.meta_batch_size, rng);
        } catch (const TaskSourceExhausted& e) {
            throw TaskSourceExhausted("meta_train: " + e.message(), it);
        }
        auto step = meta_gradient_with_losses(model, theta, episodes, config.alpha, config.inner_steps_train,
                                              config.gradient_order, config.threads);
        optimizer.step(theta, step.gradient);
        if (progress) {
            const double ms =
                std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
            progress({it, step.mean_support_loss, step.mean_query_loss, ms});
        }
        if (config.patience > 0 && it % config.validation_interval == 0) {
            const double vl = validation_loss(model, theta, validation, config);
            if (vl < best_loss) {
                best_loss = vl;
                best = theta;
                stale = 0;
            } else if (++stale >= config.patience) {
                return best;
            }
        }
    }
    if (config.patience > 0) {
        const double vl = validation_loss(model, theta, validation, config);
        if (!(vl < best_loss)) return best;
    }
    return theta;
}

ParameterVector meta_train(const Backbone& backbone, const MetaConfig& config, EpisodeSource& source,
                           const ProgressSink& progress) {
    return meta_train(backbone, backbone.init_params(backbone.config().seed), config, source, progress);
}

}  // namespace taskmaml
