#pragma once

// Run configuration, dataset manifests and checkpoints.

#include <filesystem>
#include <vector>

#include <json.hpp>

#include "mret/train.hpp"

namespace mret {

struct DataConfig {
  std::filesystem::path train_manifest;
  std::filesystem::path val_manifest;  // optional

  friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  DataConfig data;
  SamplerMode sampler = SamplerMode::mret;
  FrameStrategy strategy = FrameStrategy::uniform;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Parses a run configuration. Sections: model, multires, train, data, mode.
/// Unknown keys are rejected; missing keys keep their defaults. Relative data
/// paths resolve against `base_dir`.
RunConfig run_config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& cfg);

/// Manifest: {"seed": s, "videos": [entry...]} or a bare array of entries.
/// An entry is {"path": p, "mos"?: x, "name"?: n} or
/// {"synth": {pattern, distortion, severity, frames, height, width}, "seed"?: k, "name"?: n}.
/// Synthetic entries without their own seed use manifest seed + entry index.
std::vector<LabeledVideo> load_manifest(const std::filesystem::path& path);
SynthSpec synth_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SynthSpec& spec);

struct Checkpoint {
  RunConfig config;
  ModelParams params;
  OptState opt;
  nlohmann::json history = nlohmann::json::array();
  int epoch = 0;
};

/// Directory holding manifest.json (config, tensor table, history) and the
/// float32 blob manifest.bin. Optimizer velocities are stored as
/// "opt.velocity.<param>" tensors.
void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

nlohmann::json history_json(const std::vector<HistoryRow>& rows);

}  // namespace mret
