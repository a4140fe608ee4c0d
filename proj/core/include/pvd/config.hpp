#pragma once

// JSON run configuration. Every key is optional; missing keys keep the
// built-in defaults and command-line flags are applied on top by the CLI.
//
// {
//   "schedule":   {"kind": "linear", "T": 1000, "beta_start": 1e-4, "beta_end": 0.02, "warmup_frac": 0.1},
//   "model":      {"preset": "desk", "dropout": 0.1, "arch": {...}},
//   "train":      {"lr": 2e-4, "batch_size": 8, "steps": 1000, "seed": 0, "beta1": 0.9, "beta2": 0.999,
//                  "eps": 1e-8, "grad_clip": 0, "checkpoint_every": 0, "log_every": 10},
//   "data":       {"points": 128, "normalize": false},
//   "completion": {"keep_fraction": 0.5, "normal": [0, 0, 1]},
//   "sampler":    {"final_noise": false}
// }

#include <array>
#include <filesystem>
#include <string>

#include "json.hpp"
#include "pvd/pvnet.hpp"
#include "pvd/schedule.hpp"
#include "pvd/training.hpp"

namespace pvd {

nlohmann::json arch_to_json(const ArchConfig& arch);
/// Strict: every descriptor field is required.
ArchConfig arch_from_json(const nlohmann::json& j);

struct ScheduleConfig {
  ScheduleKind kind = ScheduleKind::Linear;
  int steps = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  double warmup_frac = 0.1;

  NoiseSchedule build() const;
};

struct ModelConfig {
  std::string preset = "desk";
  double dropout = 0.1;
  /// Explicit descriptor; overrides the preset when present.
  nlohmann::json arch;

  ArchConfig build() const;
};

struct DataConfig {
  int points = 0;  // 0 keeps the stored count
  bool normalize = false;
};

struct CompletionConfig {
  double keep_fraction = 0.5;
  std::array<double, 3> normal{0.0, 0.0, 1.0};
};

struct RunConfig {
  ScheduleConfig schedule;
  ModelConfig model;
  TrainConfig train;
  int checkpoint_every = 0;
  int log_every = 10;
  DataConfig data;
  CompletionConfig completion;
  bool final_noise = false;

  nlohmann::json to_json() const;
  /// Overlays the keys present in `j`; unknown keys raise DomainError.
  void merge(const nlohmann::json& j);
};

/// Defaults overlaid with the file contents.
RunConfig load_config(const std::filesystem::path& path);

/// Hex CRC-32 of the compact serialization.
std::string config_hash(const nlohmann::json& j);

}  // namespace pvd
