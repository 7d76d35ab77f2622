#pragma once

#include "steerlab/caa.hpp"
#include "steerlab/patching.hpp"
#include "steerlab/synth.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

// Analytic concept probes (matched filters against the planted templates) and
// the steering metrics: Preservation, Delta Alignment, Smoothness, assembled
// into per-concept steering-sweep reports.

namespace steerlab::evalx {

// Matched-filter alignment in [-1, 1]: the least-squares amplitude of the
// concept's template in the background-removed latent, clamped. Pure in the
// latent and vocabulary; independent of any model weights.
double probe_alignment(const Latent& latent, const synth::ConceptId& concept_id,
                       const synth::ConceptVocabulary& vocab);

patch::ProbeFn make_probe(const synth::ConceptVocabulary& vocab,
                          const synth::ConceptId& concept_id);

struct AlignmentCurve {
  std::vector<std::pair<double, double>> points;  // (alpha, alignment), alpha increasing
  std::string concept_name;
  std::string method;
  std::string layer_set;

  void check() const;  // >= 2 points, strictly increasing alphas
};

// alignment(alpha_max) - alignment(alpha_min).
double delta_alignment(const AlignmentCurve& curve);

// Population standard deviation of consecutive alignment differences.
double smoothness(const AlignmentCurve& curve);

struct PreservationResult {
  double feat_dist = 0.0;  // mean distance between pooled per-channel summaries
  double dist_dist = 0.0;  // mean squared Frechet distance between frame populations
  bool covariance_ridged = false;
};

// Both distances are averaged over the steered list against the fixed
// baseline (the alpha = 0 generation).
PreservationResult preservation(const std::vector<Latent>& steered, const Latent& baseline);

// Pooled summary: per-channel mean then per-channel population variance.
Vecd pooled_summary(const Latent& z);

// Squared Frechet distance between Gaussian fits (mean + population
// covariance) of the two row populations. Singular covariances get a 1e-6
// ridge and set *ridged.
double frechet_gaussian(const Matd& rows_a, const Matd& rows_b, bool* ridged = nullptr);

// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& xs, const std::vector<double>& ys);

struct SweepCell {
  double preservation_feat = 0.0;
  double preservation_dist = 0.0;
  double delta_alignment = 0.0;
  double smoothness = 0.0;
  double mean_spearman = 0.0;
  double baseline_alignment = 0.0;
  int curves = 0;
  bool preservation_flagged = false;
  bool available = false;
  std::string layer_set;
  int layer_count = 0;
};

struct EvalReport {
  std::vector<std::string> concepts;
  std::vector<std::string> policies;
  // [concept][policy]
  std::vector<std::vector<SweepCell>> cells;
  std::vector<std::vector<double>> concept_grids;  // effective alpha grid per concept
  int eval_prompts = 0;
  int eval_seeds = 0;
};

struct PolicySpec {
  std::string name;              // "functional", "complement", "all", "sae"
  std::set<int> layer_set;       // ignored for "sae" (uses the vector's layer)
  bool use_sae = false;
};

using GenerationSink = std::function<void(
    const std::string& concept_name, const std::string& policy, int prompt_index,
    uint64_t seed, double alpha, const Latent& generation)>;

using CurveSink = std::function<void(const std::string& concept_name, const std::string& policy,
                                     int prompt_index, uint64_t seed,
                                     const AlignmentCurve& curve)>;

struct SweepOptions {
  std::vector<double> alpha_grid;  // must contain 0 for the baseline
  // When non-empty, overrides alpha_grid per concept (same indexing).
  std::vector<std::vector<double>> per_concept_grids;
  int eval_prompts = 10;
  int eval_seeds = 4;
  uint64_t prompt_seed = 11;
  int workers = 0;
  GenerationSink generation_sink;  // optional persistence
  CurveSink curve_sink;
};

// Runs the full grid for each (concept, policy, prompt, seed), probes every
// generation, and aggregates the steering metrics per (concept, policy).
// Concepts with a missing steering vector are skipped with a diagnostic cell.
EvalReport run_steering_sweep(
    const dit::Weights& w, const synth::ConceptVocabulary& vocab,
    const std::vector<synth::ConceptId>& concepts,
    const std::vector<std::optional<steer::SteeringVector>>& caa_vectors,
    const std::vector<std::optional<steer::SteeringVector>>& sae_vectors,
    const std::vector<PolicySpec>& policies, const SweepOptions& opts);

// Uniform grid -a..a with `points` entries (odd counts include 0).
std::vector<double> uniform_grid(double a, int points);

}  // namespace steerlab::evalx
