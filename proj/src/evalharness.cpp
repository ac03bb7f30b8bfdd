#include "taskmaml/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"
#include "taskmaml/errors.hpp"
#include "taskmaml/io.hpp"
#include "taskmaml/meta.hpp"
#include "taskmaml/parallel.hpp"

namespace taskmaml {

void EvalConfig::validate() const {
    if (k_values.empty()) throw ConfigError("eval.k_values must be non-empty");
    for (auto k : k_values) {
        if (k < 1) throw ConfigError("eval.k_values entries must be >= 1");
    }
    if (repetitions < 1) throw ConfigError("eval.repetitions must be >= 1");
    if (eval_per_class < 1) throw ConfigError("eval.eval_per_class must be >= 1");
    if (!(alpha >= 0.0)) throw ConfigError("eval.alpha must be >= 0");
}

int predict_label(double probability) { return probability > 0.5 ? 1 : 0; }

namespace {

constexpr std::uint64_t kEvalSalt = 0x6576616cULL;

Rng repetition_rng(const Dataset& ds, const TaskId& task, std::size_t shots, std::size_t rep, std::uint64_t seed) {
    return derive_rng(seed, {kEvalSalt, ds.subject_index(task.subject), ds.attribute_index(task.attribute), shots,
                             rep});
}

double accuracy(const std::vector<double>& probs, const LabeledBatch& batch, RepetitionLog* log) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const int pred = predict_label(probs[i]);
        const int label = batch.labels[i] > 0.5 ? 1 : 0;
        if (pred == label) ++correct;
        if (log) {
            log->predictions.push_back(pred);
            log->labels.push_back(label);
        }
    }
    return static_cast<double>(correct) / static_cast<double>(probs.size());
}

AdaptationPair draw_pair(const Dataset& ds, const TaskId& task, std::size_t shots, std::size_t rep,
                         const EvalConfig& config) {
    Rng rng = repetition_rng(ds, task, shots, rep, config.seed);
    try {
        return sample_adaptation_pair(ds, task, shots, config.eval_per_class, rng);
    } catch (const Error& e) {
        throw SamplingError("evaluating task " + task.str() + ": " + e.what());
    }
}

}  // namespace

TaskEvaluation evaluate_task(const Backbone& model, const ParameterVector& theta, const Dataset& dataset,
                             const TaskId& task, std::size_t shots, const EvalConfig& config, bool keep_log) {
    config.validate();
    if (dataset.shape != model.config().input) {
        throw ShapeError("dataset input " + dataset.shape.describe() + " does not match model input " +
                         model.config().input.describe());
    }
    TaskEvaluation out;
    out.task = task;
    out.shots = shots;
    out.steps = config.steps;
    out.accuracies.resize(config.repetitions);
    if (keep_log) out.log.resize(config.repetitions);
    parallel_for(config.repetitions, config.threads, [&](std::size_t rep) {
        const auto pair = draw_pair(dataset, task, shots, rep, config);
        const auto adapted = adapt(model, theta, pair.support, config.alpha, config.steps);
        RepetitionLog* log = keep_log ? &out.log[rep] : nullptr;
        if (log) {
            log->support_rows = pair.support.rows;
            log->eval_rows = pair.evalset.rows;
        }
        out.accuracies[rep] = accuracy(model.forward(adapted, pair.evalset, Mode::eval), pair.evalset, log);
    });
    return out;
}

TaskSummary summarize(const TaskEvaluation& evaluation) {
    TaskSummary s;
    s.task = evaluation.task;
    s.shots = evaluation.shots;
    s.steps = evaluation.steps;
    s.repetitions = evaluation.accuracies.size();
    double sum = 0.0;
    for (double a : evaluation.accuracies) sum += a;
    s.mean_accuracy = sum / static_cast<double>(s.repetitions);
    double var = 0.0;
    for (double a : evaluation.accuracies) var += (a - s.mean_accuracy) * (a - s.mean_accuracy);
    s.std_accuracy = std::sqrt(var / static_cast<double>(s.repetitions));
    return s;
}

void aggregate(EvalReport& report) {
    std::vector<std::string> attrs, subjects;
    std::map<std::string, std::pair<double, std::size_t>> by_attr, by_subject;
    double total = 0.0;
    for (const auto& t : report.tasks) {
        if (!by_attr.count(t.task.attribute)) attrs.push_back(t.task.attribute);
        if (!by_subject.count(t.task.subject)) subjects.push_back(t.task.subject);
        auto& a = by_attr[t.task.attribute];
        a.first += t.mean_accuracy;
        ++a.second;
        auto& s = by_subject[t.task.subject];
        s.first += t.mean_accuracy;
        ++s.second;
        total += t.mean_accuracy;
    }
    report.per_attribute.clear();
    report.per_subject.clear();
    for (const auto& a : attrs) {
        const auto& [sum, n] = by_attr[a];
        report.per_attribute.emplace_back(a, sum / static_cast<double>(n));
    }
    for (const auto& s : subjects) {
        const auto& [sum, n] = by_subject[s];
        report.per_subject.emplace_back(s, sum / static_cast<double>(n));
    }
    report.grand_mean = report.tasks.empty() ? 0.0 : total / static_cast<double>(report.tasks.size());
}

EvalReport evaluate_folds(const Backbone& model, const Dataset& dataset, const FoldParameters& folds,
                          std::size_t shots, const EvalConfig& config, const std::string& label) {
    EvalReport report;
    report.model = label;
    report.shots = shots;
    report.steps = config.steps;
    for (const auto& subject : dataset.subjects) {
        auto it = folds.find(subject);
        if (it == folds.end()) throw Error("missing " + label + " checkpoint for fold '" + subject + "'");
        const auto plan = enumerate_tasks(dataset, subject);
        for (const auto& task : plan.test_tasks) {
            report.tasks.push_back(summarize(evaluate_task(model, it->second, dataset, task, shots, config)));
        }
    }
    aggregate(report);
    return report;
}

std::vector<ModelComparison> run_loso(const Backbone& model, const Dataset& dataset, const FoldParameters& meta,
                                      const FoldParameters& baseline, const EvalConfig& config) {
    config.validate();
    std::vector<ModelComparison> out;
    for (auto k : config.k_values) {
        ModelComparison cmp;
        cmp.shots = k;
        cmp.meta = evaluate_folds(model, dataset, meta, k, config, "meta");
        cmp.baseline = evaluate_folds(model, dataset, baseline, k, config, "baseline");
        out.push_back(std::move(cmp));
    }
    return out;
}

EvalReport cross_bank_eval(const Backbone& model, const ParameterVector& theta, const Dataset& target,
                           const std::vector<std::string>& training_attributes, std::size_t shots,
                           const EvalConfig& config, const std::string& label) {
    if (target.shape != model.config().input) {
        throw ShapeError("target bank input " + target.shape.describe() + " does not match model input " +
                         model.config().input.describe());
    }
    EvalReport report;
    report.model = label;
    report.shots = shots;
    report.steps = config.steps;
    for (const auto& a : target.attributes) {
        if (std::find(training_attributes.begin(), training_attributes.end(), a) == training_attributes.end()) {
            report.novel_attributes.push_back(a);
        }
    }
    for (const auto& task : enumerate_all_tasks(target).train_tasks) {
        auto summary = summarize(evaluate_task(model, theta, target, task, shots, config));
        summary.novel_attribute = std::find(report.novel_attributes.begin(), report.novel_attributes.end(),
                                            task.attribute) != report.novel_attributes.end();
        report.tasks.push_back(summary);
    }
    aggregate(report);
    return report;
}

std::vector<SweepPoint> gradient_step_sweep(const Backbone& model, const ParameterVector& theta,
                                            const Dataset& dataset, const std::vector<TaskId>& tasks,
                                            const std::vector<std::size_t>& k_values, std::size_t max_steps,
                                            const EvalConfig& config) {
    if (max_steps < 1) throw ConfigError("sweep max_steps must be >= 1");
    config.validate();
    std::vector<SweepPoint> out;
    for (auto k : k_values) {
        const std::size_t reps = config.repetitions;
        // acc[(task * reps + rep) * (max_steps + 1) + step]
        std::vector<double> acc(tasks.size() * reps * (max_steps + 1));
        parallel_for(tasks.size() * reps, config.threads, [&](std::size_t job) {
            const auto& task = tasks[job / reps];
            const std::size_t rep = job % reps;
            const auto pair = draw_pair(dataset, task, k, rep, config);
            ParameterVector current = theta;
            for (std::size_t step = 0; step <= max_steps; ++step) {
                if (step > 0) current = adapt(model, current, pair.support, config.alpha, 1);
                acc[job * (max_steps + 1) + step] =
                    accuracy(model.forward(current, pair.evalset, Mode::eval), pair.evalset, nullptr);
            }
        });
        for (std::size_t step = 0; step <= max_steps; ++step) {
            double sum = 0.0;
            const std::size_t n = tasks.size() * reps;
            for (std::size_t j = 0; j < n; ++j) sum += acc[j * (max_steps + 1) + step];
            out.push_back({k, step, n ? sum / static_cast<double>(n) : 0.0, n});
        }
    }
    return out;
}

std::vector<SweepPoint> merge_sweeps(const std::vector<std::vector<SweepPoint>>& sweeps) {
    if (sweeps.empty()) return {};
    std::vector<SweepPoint> out = sweeps.front();
    for (auto& p : out) p.mean_accuracy *= static_cast<double>(p.samples);
    for (std::size_t s = 1; s < sweeps.size(); ++s) {
        if (sweeps[s].size() != out.size()) throw Error("merge_sweeps: grids differ");
        for (std::size_t i = 0; i < out.size(); ++i) {
            if (sweeps[s][i].shots != out[i].shots || sweeps[s][i].step != out[i].step) {
                throw Error("merge_sweeps: grids differ");
            }
            out[i].mean_accuracy += sweeps[s][i].mean_accuracy * static_cast<double>(sweeps[s][i].samples);
            out[i].samples += sweeps[s][i].samples;
        }
    }
    for (auto& p : out) p.mean_accuracy = p.samples ? p.mean_accuracy / static_cast<double>(p.samples) : 0.0;
    return out;
}

// Report files

using io::format_double;

std::string task_csv(const EvalReport& report) {
    std::string out = "task,subject,attribute,K,steps,mean_acc,std_acc,n_reps\n";
    for (const auto& t : report.tasks) {
        out += t.task.str() + "," + t.task.subject + "," + t.task.attribute + "," + std::to_string(t.shots) + "," +
               std::to_string(t.steps) + "," + format_double(t.mean_accuracy) + "," + format_double(t.std_accuracy) +
               "," + std::to_string(t.repetitions) + "\n";
    }
    return out;
}

namespace {

std::string comparison_table(const std::vector<ModelComparison>& comparisons, bool by_attribute) {
    const std::string key = by_attribute ? "attribute" : "subject";
    std::string out = key;
    for (const auto& c : comparisons) {
        out += ",base_K" + std::to_string(c.shots) + ",ours_K" + std::to_string(c.shots);
    }
    out += "\n";
    if (comparisons.empty()) return out;
    const auto& rows = by_attribute ? comparisons.front().meta.per_attribute : comparisons.front().meta.per_subject;
    auto lookup = [](const std::vector<std::pair<std::string, double>>& v, const std::string& name) {
        for (const auto& [n, x] : v) {
            if (n == name) return x;
        }
        throw Error("comparison table: missing row '" + name + "'");
    };
    for (const auto& [name, ignored] : rows) {
        out += name;
        for (const auto& c : comparisons) {
            const auto& b = by_attribute ? c.baseline.per_attribute : c.baseline.per_subject;
            const auto& m = by_attribute ? c.meta.per_attribute : c.meta.per_subject;
            out += "," + format_double(lookup(b, name)) + "," + format_double(lookup(m, name));
        }
        out += "\n";
    }
    out += "AVG";
    for (const auto& c : comparisons) {
        out += "," + format_double(c.baseline.grand_mean) + "," + format_double(c.meta.grand_mean);
    }
    out += "\n";
    return out;
}

nlohmann::json report_to_json(const EvalReport& r) {
    nlohmann::json j;
    j["model"] = r.model;
    j["K"] = r.shots;
    j["steps"] = r.steps;
    j["grand_mean"] = r.grand_mean;
    j["n_tasks"] = r.tasks.size();
    nlohmann::json attrs = nlohmann::json::array(), subjects = nlohmann::json::array();
    for (const auto& [n, v] : r.per_attribute) attrs.push_back({{"attribute", n}, {"mean_acc", v}});
    for (const auto& [n, v] : r.per_subject) subjects.push_back({{"subject", n}, {"mean_acc", v}});
    j["per_attribute"] = attrs;
    j["per_subject"] = subjects;
    if (!r.novel_attributes.empty()) j["novel_attributes"] = r.novel_attributes;
    return j;
}

}  // namespace

std::string attribute_table_csv(const std::vector<ModelComparison>& comparisons) {
    return comparison_table(comparisons, true);
}

std::string subject_table_csv(const std::vector<ModelComparison>& comparisons) {
    return comparison_table(comparisons, false);
}

std::string sweep_csv(const std::vector<SweepPoint>& sweep) {
    std::string out = "K,step,mean_acc,n_samples\n";
    for (const auto& p : sweep) {
        out += std::to_string(p.shots) + "," + std::to_string(p.step) + "," + format_double(p.mean_accuracy) + "," +
               std::to_string(p.samples) + "\n";
    }
    return out;
}

std::string summary_json(const std::vector<ModelComparison>& comparisons) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& c : comparisons) {
        j.push_back({{"K", c.shots},
                     {"meta", report_to_json(c.meta)},
                     {"baseline", report_to_json(c.baseline)},
                     {"gap", c.meta.grand_mean - c.baseline.grand_mean}});
    }
    return j.dump(2) + "\n";
}

std::string report_json(const EvalReport& report) { return report_to_json(report).dump(2) + "\n"; }

}  // namespace taskmaml
