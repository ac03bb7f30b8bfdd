#pragma once

#include <compare>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "taskmaml/parameters.hpp"

namespace taskmaml {

using Rng = std::mt19937_64;

/// One (subject, attribute) detection problem.
struct TaskId {
    std::string subject;
    std::string attribute;

    auto operator<=>(const TaskId&) const = default;
    std::string str() const { return subject + "/" + attribute; }
};

/// Support set for the inner update, query set for the meta-loss.
struct TaskEpisode {
    TaskId task;
    LabeledBatch support;
    LabeledBatch query;
};

/// Produces episodes for the meta-training loop.
class EpisodeSource {
public:
    virtual ~EpisodeSource() = default;
    /// `count` episodes of distinct tasks. Throws TaskSourceExhausted when impossible.
    virtual std::vector<TaskEpisode> sample(std::size_t count, Rng& rng) = 0;
};

/// Independent stream for a (seed, salt...) tuple.
inline Rng derive_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> salt) {
    std::vector<std::uint64_t> words{seed};
    words.insert(words.end(), salt.begin(), salt.end());
    std::vector<std::uint32_t> halves;
    for (auto w : words) {
        halves.push_back(static_cast<std::uint32_t>(w));
        halves.push_back(static_cast<std::uint32_t>(w >> 32));
    }
    std::seed_seq seq(halves.begin(), halves.end());
    return Rng(seq);
}

}  // namespace taskmaml
