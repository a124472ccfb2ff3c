#pragma once

#include "spkdnn/balance.hpp"
#include "spkdnn/dnn.hpp"
#include "spkdnn/rbm.hpp"
#include "spkdnn/udbn.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace spkdnn {

struct SynthSetup {
  bool enabled = false;
  int speakers = 20;
  int enroll_sessions = 1;
  int test_sessions = 2;
  int background_speakers = 100;
  int background_sessions = 2;
  int dimension = 50;
  double between_spread = 1.0;
  double within_spread = 0.2;
};

/// Every setting of one experiment. Built from a preset and then overridden
/// key by key; see config_keys() for the flat key=value schema.
struct ExperimentConfig {
  std::filesystem::path background;
  std::filesystem::path enroll;
  std::filesystem::path test;
  std::filesystem::path trials;
  std::filesystem::path output_dir;

  EnrollMode task = EnrollMode::single;
  int depth = 1;
  std::uint64_t master_seed = 0;
  SynthSetup synth;

  std::vector<Index> hidden_sizes;
  RbmTrainConfig grbm = RbmTrainConfig::gaussian_defaults();
  RbmTrainConfig brbm = RbmTrainConfig::bernoulli_defaults();

  bool adapt_enabled = true;
  AdaptConfig adapt;
  FineTuneConfig finetune;

  bool select_enabled = true;
  ImpostorSelectionConfig selection;
  int num_minibatches = 3;
  int num_centroids = 12;
  int kmeans_max_iter = 100;

  bool fusion_enabled = true;
};

/// Named hyperparameter table: single-1L, single-2L, single-3L, multi-1L, multi-2L, multi-3L.
ExperimentConfig preset(const std::string& name);
std::string preset_name(EnrollMode task, int depth);

using ConfigMap = std::map<std::string, std::string>;

/// Parses key=value lines ('#' starts a comment).
ConfigMap parse_config_text(const std::string& text, const std::string& source = "<config>");
ConfigMap load_config_file(const std::filesystem::path& path);

/// Applies "key=value" override strings on top of `base`.
void apply_overrides(ConfigMap& base, const std::vector<std::string>& overrides);

/// Resolves a key map into a config: picks the preset from `preset` or
/// `task`+`depth`, then applies every remaining key. Relative paths are taken
/// relative to `base_dir`. Unknown keys are rejected.
ExperimentConfig resolve_config(const ConfigMap& map, const std::filesystem::path& base_dir = {});

/// Canonical key=value rendering of every resolved setting, in schema order.
std::string to_text(const ExperimentConfig& cfg);

/// FNV-1a 64 of to_text(cfg), as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

const std::vector<std::string>& config_keys();

}  // namespace spkdnn
