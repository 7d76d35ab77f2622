#pragma once

#include "steerlab/sample.hpp"
#include "steerlab/synth.hpp"

#include <nlohmann/json_fwd.hpp>

#include <filesystem>
#include <set>
#include <string>
#include <vector>

// Contrastive Activation Addition: steering vectors from contrastive prompt
// pairs, applied at chosen layers with ReNorm.

namespace steerlab::steer {

struct SteeringVector {
  enum class Method { CAA, SAE };
  enum class NormPolicy { Renorm, PlainAdd };

  std::string concept_name;
  Method method = Method::CAA;
  NormPolicy norm_policy = NormPolicy::Renorm;
  int layers = 0;     // total model layers
  int timesteps = 0;
  bool time_averaged = false;  // one direction per layer, replicated across timesteps
  int source_layer = -1;       // SAE vectors: the layer the SAE was trained on
  // [layer][timestep] (or [layer][0] when time-averaged); empty vector = absent
  // (degenerate direction). CAA directions are unit-norm; SAE vectors are not.
  std::vector<std::vector<Vecf>> directions;
  double alpha_scale = 1.0;  // suggested grid endpoint |alpha|

  bool has(int layer, int t) const;
  const Vecf& at(int layer, int t) const;
};

struct CollectedOutputs {
  std::vector<int> layers;  // captured layers, ascending
  int total_layers = 0;
  int timesteps = 0;
  // [spec][index into layers][timestep] -> cross-attention output averaged
  // across temporal frames, then across seeds.
  std::vector<std::vector<std::vector<Vecf>>> per_spec;
  double median_row_norm = 0.0;  // median per-frame output norm at captured layers
};

CollectedOutputs collect_attn_outputs(const dit::Weights& w,
                                      const synth::ConceptVocabulary& vocab,
                                      const std::vector<synth::PromptSpec>& specs,
                                      const std::vector<uint64_t>& seeds,
                                      const std::vector<int>& layers, int workers = 0);

// v = (1/N) sum_i (h_pos_i - h_neg_i) per (layer, timestep); stored direction
// is v normalized; keys with ||v|| < 1e-9 are flagged degenerate (absent).
SteeringVector compute_caa_vector(const CollectedOutputs& pos, const CollectedOutputs& neg,
                                  const std::string& concept_name);

// h_steered * (||h_orig|| / ||h_steered||), norms over the whole F x d block.
// Guards division by zero by returning h_orig (sets *warned when provided).
Matf renorm(const Matf& h_steered, const Matf& h_orig, bool* warned = nullptr);

struct SteerOptions {
  bool renorm_enabled = true;    // CAA default; ignored for PlainAdd vectors
  bool per_frame_renorm = false; // ablation: renormalize each frame row separately
  // Records (pre-intervention norm, post-intervention norm) per hook firing.
  std::vector<std::pair<float, float>>* norm_log = nullptr;
};

// sample() with an output interceptor adding alpha * direction to the
// cross-attention output of each targeted layer, before the residual
// addition, renormalized per the vector's policy. alpha = 0 is the identity.
Latent apply_steering(const dit::Weights& w, const synth::ConceptVocabulary& vocab,
                      const synth::PromptSpec& spec, const SteeringVector& vec, double alpha,
                      const std::set<int>& layer_set, uint64_t seed,
                      const SteerOptions& opts = {});

Latent apply_caa(const dit::Weights& w, const synth::ConceptVocabulary& vocab,
                 const synth::PromptSpec& spec, const SteeringVector& vec, double alpha,
                 const std::set<int>& layer_set, uint64_t seed, const SteerOptions& opts = {});

// Collapses a per-timestep vector to one direction per layer (mean over
// timesteps, re-normalized for CAA vectors).
SteeringVector average_over_time(const SteeringVector& vec);

void save_steering_vector(const std::filesystem::path& dir, const SteeringVector& vec,
                          const nlohmann::json& extra_meta);
SteeringVector load_steering_vector(const std::filesystem::path& dir,
                                    nlohmann::json* meta_out = nullptr);

}  // namespace steerlab::steer
