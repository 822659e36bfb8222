#pragma once

// Experiment configuration (JSON) and run manifests.
//
// Every key has a default, so an empty object is a complete configuration.
// Model input shape and class count follow the loaded data unless set.

#include <cstdint>
#include <string>
#include <vector>

#include "cps/attacks.hpp"
#include "cps/hypernet.hpp"
#include "cps/shifts.hpp"
#include "cps/synthetic.hpp"
#include "cps/trainers.hpp"

namespace cps {

inline constexpr const char* kToolVersion = "0.3.0";

struct TaskRecipe {
  std::string name;
  std::vector<int> labels;  // fine-label filter, empty keeps every label
  std::vector<ShiftSpec> shifts;
};

struct DataRecipe {
  std::string source = "synthetic";  // synthetic | cifar10 | cifar100
  std::string path;
  std::size_t limit = 0;  // keep only the first `limit` samples of a dataset file (0 = all)
  double split_ratio = 0.8;
  SyntheticOptions synthetic{.sample_shape = {1, 4, 4}};
  std::vector<TaskRecipe> tasks;
};

struct InferenceSettings {
  std::vector<std::string> modes{"centre", "ensemble", "interpolated", "boundary"};
  std::size_t ensemble_m = 1000;
  std::size_t param_segments = 50;
  std::size_t input_segments = 5;
  bool exclude_boundary = true;
  // Test-time shifted columns.
  ShiftSpec backdoor{.kind = ShiftKind::backdoor, .seed = 1};
  std::uint64_t permutation_seed = 1;
  double rotation_degrees = 90.0;
};

struct BaselineSettings {
  std::string regime = "standard";  // standard | cutmix | adversarial | backdoor-adv
  double fraction = 0.5;
  std::size_t triggers = 20;
  double trigger_epsilon = 0.4;
};

struct HypernetSettings {
  std::vector<std::size_t> meta_widths{32};
  ContinualConfig continual;
};

struct ProbeSettings {
  std::string kind = "theorem2";  // theorem2 | theorem3
  std::vector<double> task_coeffs;  // interpolated task for theorem3; empty = 50/50 of the first two tasks
  std::size_t param_segments = 11;
};

struct ExperimentConfig {
  ModelSpec model = ModelSpec::preset("3-layer");
  bool input_shape_set = false;
  bool classes_set = false;
  DataRecipe data;
  double beta = 1.0;
  TrainConfig train;
  AttackConfig attack;
  InferenceSettings inference;
  BaselineSettings baseline;
  HypernetSettings hypernet;
  ProbeSettings probe;
  std::string output_dir = "cpslab-out";

  void validate() const;
};

/// Parses JSON text; unknown keys and type errors raise ConfigError.
ExperimentConfig parse_config(const std::string& text, const std::vector<std::string>& overrides = {});
/// Reads a file; a missing or unreadable file raises ConfigError.
ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {});
/// Canonical JSON of the fully resolved configuration.
std::string config_to_json(const ExperimentConfig& cfg);
std::string config_hash(const ExperimentConfig& cfg);

struct PreparedTasks {
  ModelSpec model;  // with input shape and classes resolved from the data
  std::vector<TaskSet> train;
  std::vector<TaskSet> test;
};

/// Loads or generates the task sets named by the recipe and splits each one.
PreparedTasks prepare_tasks(const ExperimentConfig& cfg);

struct ArtifactRecord {
  std::string path;  // relative to the run directory
  std::string hash;
};

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct RunManifest {
  std::string command;
  std::string config_hash;
  std::string version = kToolVersion;
  std::vector<ArtifactRecord> artifacts;
  std::vector<StageTiming> timings;

  /// Hashes each listed artifact under `dir`.
  void record(const std::string& dir, const std::string& relative);
  /// Hash over command, config hash, version and artifact hashes (timings excluded).
  std::string content_hash() const;
  void save(const std::string& path) const;
  static RunManifest load(const std::string& path);
};

}  // namespace cps
