#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "taskmaml/backbone.hpp"

namespace taskmaml {

/// Provenance stored in the sidecar manifest.
struct CheckpointInfo {
    std::string origin;  // "meta" or "baseline"
    std::optional<std::string> held_out_subject;
    std::vector<std::string> training_attributes;
};

struct Checkpoint {
    BackboneConfig config;
    ParameterVector params;
    CheckpointInfo info;
};

/// Binary layout: "TMCKPT01", u64 entry count, per entry (u64 name length,
/// name bytes, u64 offset, u64 length), u64 value count, then little-endian
/// float32 values. `<path>.json` holds the config and a CRC-32 of the binary.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::filesystem::path sidecar_path(const std::filesystem::path& checkpoint_path);

std::string backbone_config_json(const BackboneConfig& config);
BackboneConfig backbone_config_from_json(const std::string& text);

}  // namespace taskmaml
