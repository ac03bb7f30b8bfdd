#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "taskmaml/backbone.hpp"
#include "taskmaml/taskbank.hpp"

namespace taskmaml {

struct EvalConfig {
    std::vector<std::size_t> k_values{1, 5};
    std::size_t steps = 5;          // G
    std::size_t repetitions = 500;
    std::size_t eval_per_class = 10;
    double alpha = 0.03;
    std::uint64_t seed = 0;
    std::size_t threads = 1;

    void validate() const;
};

/// Everything one repetition saw; filled only when a log is requested.
struct RepetitionLog {
    std::vector<std::size_t> support_rows;
    std::vector<std::size_t> eval_rows;
    std::vector<int> labels;
    std::vector<int> predictions;
};

struct TaskEvaluation {
    TaskId task;
    std::size_t shots = 0;
    std::size_t steps = 0;
    std::vector<double> accuracies;  // one per repetition
    std::vector<RepetitionLog> log;
};

/// Probability > 0.5 is positive; exactly 0.5 is negative.
int predict_label(double probability);

/// Repeated K-shot adaptation and balanced evaluation of one task.
/// Draws depend only on (seed, task, K, repetition), never on theta.
TaskEvaluation evaluate_task(const Backbone& model, const ParameterVector& theta, const Dataset& dataset,
                             const TaskId& task, std::size_t shots, const EvalConfig& config,
                             bool keep_log = false);

struct TaskSummary {
    TaskId task;
    std::size_t shots = 0;
    std::size_t steps = 0;
    double mean_accuracy = 0.0;
    double std_accuracy = 0.0;  // population standard deviation
    std::size_t repetitions = 0;
    bool novel_attribute = false;
};

TaskSummary summarize(const TaskEvaluation& evaluation);

struct EvalReport {
    std::string model;
    std::size_t shots = 0;
    std::size_t steps = 0;
    std::vector<TaskSummary> tasks;
    std::vector<std::pair<std::string, double>> per_attribute;  // mean over subjects
    std::vector<std::pair<std::string, double>> per_subject;    // mean over attributes
    double grand_mean = 0.0;                                     // mean over tasks
    std::vector<std::string> novel_attributes;
};

/// Recomputes the aggregates from `report.tasks` in first-appearance order.
void aggregate(EvalReport& report);

struct ModelComparison {
    std::size_t shots = 0;
    EvalReport meta;
    EvalReport baseline;
};

using FoldParameters = std::map<std::string, ParameterVector>;

/// Evaluates every held-out subject's tasks with that fold's parameters, for each K.
std::vector<ModelComparison> run_loso(const Backbone& model, const Dataset& dataset, const FoldParameters& meta,
                                      const FoldParameters& baseline, const EvalConfig& config);

/// Single-model LOSO evaluation at one K.
EvalReport evaluate_folds(const Backbone& model, const Dataset& dataset, const FoldParameters& folds,
                          std::size_t shots, const EvalConfig& config, const std::string& label);

/// Adaptation on every task of another bank; attributes absent from training are flagged novel.
EvalReport cross_bank_eval(const Backbone& model, const ParameterVector& theta, const Dataset& target,
                           const std::vector<std::string>& training_attributes, std::size_t shots,
                           const EvalConfig& config, const std::string& label = "model");

struct SweepPoint {
    std::size_t shots = 0;
    std::size_t step = 0;
    double mean_accuracy = 0.0;
    std::size_t samples = 0;  // task x repetition evaluations
};

/// Accuracy after 0..max_steps updates of one adaptation trajectory per repetition.
std::vector<SweepPoint> gradient_step_sweep(const Backbone& model, const ParameterVector& theta,
                                            const Dataset& dataset, const std::vector<TaskId>& tasks,
                                            const std::vector<std::size_t>& k_values, std::size_t max_steps,
                                            const EvalConfig& config);

/// Sample-weighted merge of sweeps with identical (K, step) grids.
std::vector<SweepPoint> merge_sweeps(const std::vector<std::vector<SweepPoint>>& sweeps);

// Report files

std::string task_csv(const EvalReport& report);
std::string attribute_table_csv(const std::vector<ModelComparison>& comparisons);
std::string subject_table_csv(const std::vector<ModelComparison>& comparisons);
std::string sweep_csv(const std::vector<SweepPoint>& sweep);
std::string summary_json(const std::vector<ModelComparison>& comparisons);
std::string report_json(const EvalReport& report);

}  // namespace taskmaml
