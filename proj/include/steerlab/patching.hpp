#pragma once

#include "steerlab/sample.hpp"
#include "steerlab/synth.hpp"

#include <nlohmann/json_fwd.hpp>

#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

// Cross-attention K/V recording from target runs, K/V substitution during
// source runs, and per-layer impact scores for localizing functional layers.

namespace steerlab::patch {

struct KVEntry {
  Matf k, v;  // C x d, head-major columns
};

struct KVCache {
  int layers = 0;
  int timesteps = 0;
  std::vector<KVEntry> entries;   // index l * timesteps + t
  std::vector<uint8_t> present;
  std::string prompt_key;
  uint64_t seed = 0;

  bool complete() const;
  const KVEntry& at(int layer, int t) const;
  KVEntry& slot(int layer, int t);
};

struct RecordResult {
  KVCache cache;
  Latent generation;  // the target run's output, reusable as sim(l<-c, l'<-c)
};

// Runs sample() under a recorder hook; the cache is checked complete (L x T).
RecordResult record_kv(const dit::Weights& w, const synth::ConceptVocabulary& vocab,
                       const synth::PromptSpec& spec, uint64_t seed);

enum class PatchMode { KV, KOnly, VOnly };

struct PatchOptions {
  PatchMode mode = PatchMode::KV;
  bool allow_seed_mismatch = false;
};

// sample() with cached keys/values substituted at the given layers at every
// timestep; all other layers keep the source prompt.
Latent patched_sample(const dit::Weights& w, const synth::ConceptVocabulary& vocab,
                      const synth::PromptSpec& source_spec, const KVCache& cache,
                      const std::set<int>& layer_set, uint64_t seed,
                      const PatchOptions& opts = {});

using ProbeFn = std::function<double(const Latent&)>;

struct ImpactSample {
  std::optional<double> value;  // absent when |denominator| < delta
  double sim_patched = 0, sim_source = 0, sim_target = 0;
};

// Normalized concept-transfer ratio for patching `layer` with the cache of the
// pair's concept side: (sim_patched - sim_source) / (sim_target - sim_source).
ImpactSample impact(const dit::Weights& w, const synth::ConceptVocabulary& vocab,
                    const std::pair<synth::PromptSpec, synth::PromptSpec>& pair, int layer,
                    const ProbeFn& probe, uint64_t seed, double delta = 1e-3,
                    const PatchOptions& opts = {});

struct ImpactCell {
  double mean = 0.0;
  int count = 0;     // valid samples averaged
  int excluded = 0;  // degenerate-denominator samples, excluded not clamped
  bool valid() const { return count > 0; }
};

struct ImpactMatrix {
  std::vector<std::string> concepts;
  std::vector<std::vector<ImpactCell>> cells;  // [layer][concept]
  std::vector<ImpactCell> full_set_diagnostic;  // per concept, all-layers pseudo-cell
  int pairs_per_concept = 0;
  int seeds_per_prompt = 0;
  double delta = 1e-3;
  uint64_t pair_seed = 0;

  int layer_count() const { return static_cast<int>(cells.size()); }
};

struct ImpactOptions {
  int pairs_per_concept = 32;
  int seeds_per_prompt = 8;
  double delta = 1e-3;
  PatchMode mode = PatchMode::KV;
  uint64_t pair_seed = 1;
  int workers = 0;
  bool diagnostic_full_set = false;
};

using ProbeFactory = std::function<ProbeFn(const synth::ConceptId&)>;

// Mean impact per (layer, concept) over all (pair, seed) combinations. The
// ratio is computed per sample and then averaged.
ImpactMatrix impact_matrix(const dit::Weights& w, const synth::ConceptVocabulary& vocab,
                           const std::vector<synth::ConceptId>& concepts,
                           const ProbeFactory& probe_for, const ImpactOptions& opts);

struct SelectionPolicy {
  enum Kind { TopK, Threshold } kind = TopK;
  int k = 2;
  double fraction = 0.5;  // Threshold: mean impact >= fraction * max layer mean
};

// Layer means are taken across concepts (valid cells only); ties break toward
// the lowest index. Returns ascending layer indices.
std::vector<int> select_functional_layers(const ImpactMatrix& matrix,
                                          const SelectionPolicy& policy = {});

std::string impact_to_csv(const ImpactMatrix& m);
nlohmann::json impact_to_json(const ImpactMatrix& m);

}  // namespace steerlab::patch
