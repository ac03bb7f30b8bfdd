#pragma once

#include <filesystem>
#include <string>

#include "taskmaml/backbone.hpp"
#include "taskmaml/baseline.hpp"
#include "taskmaml/evalharness.hpp"
#include "taskmaml/meta.hpp"
#include "taskmaml/synthgen.hpp"

namespace taskmaml {

struct PathsConfig {
    std::string dataset = "bank";
    /// Second bank for cross-bank evaluation.
    std::string target_dataset = "target_bank";
    std::string checkpoint_dir = "checkpoints";
    std::string report_dir = "reports";
};

/// Every tunable of a run. Sections: backbone, meta, baseline, eval, synth, paths.
/// The backbone input shape is not configurable; it always comes from the dataset.
struct RunConfig {
    BackboneConfig backbone;
    MetaConfig meta;
    /// Only iterations and batch_per_class are read; rate, optimizer and seed follow `meta`.
    BaselineConfig baseline;
    EvalConfig eval;
    std::size_t sweep_max_steps = 5;
    SynthConfig synth;
    PathsConfig paths;
};

/// INI text: `[section]` headers, `key = value` lines, `;` or `#` comments.
/// Unknown sections or keys, duplicates and malformed values throw ConfigError.
RunConfig parse_config(const std::string& text, const std::string& origin = "<config>");
RunConfig load_config(const std::filesystem::path& path);

/// Sets `section.key` from its textual value; throws ConfigError for unknown keys.
void apply_override(RunConfig& config, const std::string& dotted_key, const std::string& value);

/// All keys with resolved values, in canonical order; parse_config(to_ini(c)) reproduces c.
std::string to_ini(const RunConfig& config);

}  // namespace taskmaml
