#pragma once

#include "steerlab/model.hpp"
#include "steerlab/synth.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

namespace steerlab {

// One experiment, fully serializable; a stored config re-runs to byte-identical
// reports. Vocabulary grid sizes (frames/channels/prompt dim) follow the model.
struct ExperimentConfig {
  uint64_t seed = 7;
  int workers = 0;

  dit::ModelConfig model;  // layers 8, dim 64, heads 4, prompt_dim 32, frames 64, timesteps 50

  struct Vocab {
    int axes = 3;
    int binaries = 3;
    int ctx_tokens = 8;
  } vocab;

  struct Train {
    int steps = 4000;
    int batch = 16;
    float lr = 0.03f;
    float momentum = 0.9f;
  } train;

  struct Trace {
    int pairs = 6;
    int seeds = 2;
    double delta = 1e-3;
    std::string mode = "kv";  // kv | k-only | v-only
    bool diagnostic = false;
    uint64_t pair_seed = 1;
    int functional_k = 2;
  } trace;

  struct Steer {
    int grid_points = 9;
    std::string grid_preset = "auto";  // auto (activation-scaled) | paper-grid (-100..100 step 10)
    int pairs = 8;
    int pair_seeds = 2;
    int eval_prompts = 10;
    int eval_seeds = 4;
    uint64_t prompt_seed = 11;
    bool time_averaged = false;
  } steer;

  struct Sae {
    int m = 4;
    int k = 64;
    int epochs = 15;
    double epsilon = 1e-6;
    int tau_default = 20;
    std::map<std::string, int> tau_overrides = {{"mood", 40}};
    int stride = 5;  // keep timesteps with t % stride == 0
    int corpus_specs = 80;
    int corpus_seeds = 1;
    float lr = 3e-4f;
    int batch = 64;
  } sae;

  synth::VocabConfig vocab_config() const;
  int tau_for(const std::string& concept_name) const;
  void validate() const;  // throws ConfigError

  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::filesystem::path& file);
  void save(const std::filesystem::path& file) const;

  // Hash of the canonical JSON dump; stamped into every artifact.
  std::string hash() const;

  // Dotted-path override, e.g. set("train.steps", "500").
  void set_path(const std::string& dotted, const std::string& value);
};

}  // namespace steerlab
