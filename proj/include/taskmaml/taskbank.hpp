#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "taskmaml/backbone.hpp"
#include "taskmaml/task.hpp"

namespace taskmaml {

enum class LabelMode { binary, intensity };
enum class PayloadKind { features_file, image_directory };

inline constexpr std::int8_t kUnlabeled = -1;

struct Example {
    std::string id;
    std::size_t subject = 0;  // index into Dataset::subjects
};

/// Examples grouped by subject with binary per-attribute labels.
///
/// Immutable once built; every sampler takes its own rng so concurrent reads
/// are safe.
struct Dataset {
    InputShape shape;
    std::vector<std::string> subjects;
    std::vector<std::string> attributes;
    std::vector<Example> examples;
    std::vector<float> payload;       // examples.size() x shape.size()
    std::vector<std::int8_t> labels;  // examples.size() x attributes.size(), kUnlabeled if absent

    std::size_t subject_index(const std::string& name) const;
    std::size_t attribute_index(const std::string& name) const;
    bool has_subject(const std::string& name) const;
    bool has_attribute(const std::string& name) const;

    std::int8_t label(std::size_t row, std::size_t attribute) const {
        return labels[row * attributes.size() + attribute];
    }
    std::span<const float> features(std::size_t row) const {
        return std::span<const float>(payload).subspan(row * shape.size(), shape.size());
    }
    std::size_t label_count() const;
    /// Rows of one subject in dataset order.
    std::vector<std::size_t> subject_rows(std::size_t subject) const;
    /// Throws DataError if an invariant is broken.
    void validate() const;
};

int binarize_intensity(int intensity);

/// Reads a task-bank directory (or its manifest.json).
Dataset load_dataset(const std::filesystem::path& manifest_path);

struct WriteOptions {
    PayloadKind payload = PayloadKind::features_file;
};
/// Writes `dataset` as a task-bank directory. Output bytes depend only on the dataset.
void write_dataset(const Dataset& dataset, const std::filesystem::path& directory, const WriteOptions& options = {});

/// Restriction to the listed subjects and attributes (in the given order).
Dataset subset(const Dataset& dataset, const std::vector<std::string>& subjects,
               const std::vector<std::string>& attributes);

struct SkippedTask {
    TaskId task;
    std::size_t positive_deficit = 0;
    std::size_t negative_deficit = 0;
};

struct SplitPlan {
    std::optional<std::string> held_out_subject;
    std::vector<TaskId> train_tasks;
    std::vector<TaskId> test_tasks;
    std::vector<SkippedTask> skipped;
};

/// Leave-one-subject-out split: train on every other subject x attribute.
SplitPlan enumerate_tasks(const Dataset& dataset, const std::string& held_out_subject);
/// All subject x attribute tasks for training (no held-out subject).
SplitPlan enumerate_all_tasks(const Dataset& dataset);
/// Moves train tasks that cannot yield disjoint (N+, N-) support and query sets into `skipped`.
SplitPlan apply_skip_rule(const Dataset& dataset, SplitPlan plan, std::size_t shots);

struct TaskPools {
    std::vector<std::size_t> positives;
    std::vector<std::size_t> negatives;
};
TaskPools task_pools(const Dataset& dataset, const TaskId& task);

using EpisodeOrSkip = std::variant<TaskEpisode, SkippedTask>;

/// Balanced (N+, N-) support and disjoint (N+, N-) query, or the deficit.
EpisodeOrSkip sample_episode(const Dataset& dataset, const TaskId& task, std::size_t shots, Rng& rng);

struct AdaptationPair {
    LabeledBatch support;
    LabeledBatch evalset;
};

/// K-shot support and evaluation set; missing positives are replaced by negatives.
AdaptationPair sample_adaptation_pair(const Dataset& dataset, const TaskId& task, std::size_t shots,
                                      std::size_t eval_per_class, Rng& rng);

struct ImbalanceRow {
    TaskId task;
    std::size_t labeled = 0;
    std::size_t positives = 0;
    double positive_fraction = 0.0;
};
std::vector<ImbalanceRow> imbalance_stats(const Dataset& dataset);

LabeledBatch make_batch(const Dataset& dataset, std::span<const std::size_t> rows, std::size_t attribute);

/// Uniformly samples distinct trainable tasks and draws an episode for each.
class TaskBankSource final : public EpisodeSource {
public:
    TaskBankSource(const Dataset& dataset, const SplitPlan& plan, std::size_t shots);

    std::vector<TaskEpisode> sample(std::size_t count, Rng& rng) override;

    const std::vector<TaskId>& tasks() const noexcept { return tasks_; }
    const std::vector<SkippedTask>& skipped() const noexcept { return skipped_; }

private:
    const Dataset& dataset_;
    std::vector<TaskId> tasks_;
    std::vector<SkippedTask> skipped_;
    std::size_t shots_;
};

}  // namespace taskmaml
