#pragma once

#include "steerlab/common.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

// Synthetic concept world: a vocabulary of musical-attribute analogues with
// planted latent templates, a renderer for clean latents, deterministic prompt
// embeddings, and counterfactual prompt pairs.
//
// Templates are built on disjoint channel groups so that every concept is
// exactly orthogonal to every other concept and to the style (background)
// subspace. Each template is scaled to unit RMS on its own support, i.e.
// amplitude 1.0 relative to the unit-variance background.

namespace steerlab::synth {

struct VocabConfig {
  int axes = 3;
  int binaries = 3;
  int frames = 64;       // F
  int channels = 64;     // d
  int prompt_dim = 32;   // d_c
  int ctx_tokens = 8;    // C
};

struct ConceptAxis {
  std::string name;
  std::string variant_names[2];
  Matf variant_templates[2];  // F x d
  int variant_tokens[2];
  int steer_variant = 0;  // canonical positive variant for steering/tracing
};

struct BinaryConcept {
  std::string name;
  Matf pattern;  // F x d
  int token;
};

// Reference to one probe-able concept: either an axis variant or a binary.
struct ConceptId {
  bool is_axis = true;
  int axis = 0;
  int variant = 0;
  int binary = 0;

  static ConceptId axis_variant(int a, int v) { return {true, a, v, 0}; }
  static ConceptId binary_concept(int b) { return {false, 0, 0, b}; }
  bool operator==(const ConceptId&) const = default;
};

struct ConceptVocabulary {
  uint64_t seed = 0;
  VocabConfig config;
  std::vector<ConceptAxis> axes;
  std::vector<BinaryConcept> binaries;
  std::vector<Matf> style_basis;  // orthonormal F x d patterns
  double style_coeff_sigma = 1.0;
  Matf embedding_table;  // tokens x d_c, unit-norm rows
  int background_token = 0;
  int pad_token = 0;

  const Matf& template_of(const ConceptId& c) const;
  std::string concept_name(const ConceptId& c) const;
  ConceptId parse_concept(const std::string& name) const;
  std::vector<ConceptId> default_concepts() const;  // steer variant per axis + all binaries
  std::vector<ConceptId> all_probe_concepts() const;
};

struct PromptSpec {
  std::map<int, int> assignments;  // axis index -> variant index
  std::set<int> presences;         // binary indices
  uint32_t style_seed = 0;

  bool operator==(const PromptSpec&) const = default;
  std::string key() const;  // canonical string, also used for provenance ids
};

using PromptEmbedding = Matf;  // C x d_c

ConceptVocabulary build_vocabulary(uint64_t seed, const VocabConfig& config = {});

Latent render_clean_latent(const ConceptVocabulary& vocab, const PromptSpec& spec,
                           uint64_t seed);

// Neutral background only (the empty-spec render).
Latent render_background(const ConceptVocabulary& vocab, uint32_t style_seed, uint64_t seed);

PromptEmbedding embed_prompt(const ConceptVocabulary& vocab, const PromptSpec& spec);

std::vector<std::pair<PromptSpec, PromptSpec>> make_counterfactual_pairs(
    const ConceptVocabulary& vocab, const ConceptId& concept_id, int n, uint64_t seed);

// Diverse specs that leave the named concept untouched (axis unassigned or
// binary absent); used as steering evaluation prompts.
std::vector<PromptSpec> neutral_specs(const ConceptVocabulary& vocab, const ConceptId& concept_id,
                                      int n, uint64_t seed);

// Fully random specs from the training distribution.
std::vector<PromptSpec> random_specs(const ConceptVocabulary& vocab, int n, uint64_t seed);

void validate_spec(const ConceptVocabulary& vocab, const PromptSpec& spec);

nlohmann::json spec_to_json(const PromptSpec& spec);
PromptSpec spec_from_json(const nlohmann::json& j);

void save_vocabulary(const std::filesystem::path& dir, const ConceptVocabulary& vocab);
ConceptVocabulary load_vocabulary(const std::filesystem::path& dir);

void save_pair_set(const std::filesystem::path& file,
                   const std::vector<std::pair<PromptSpec, PromptSpec>>& pairs,
                   const std::string& concept_name, uint64_t seed);
std::vector<std::pair<PromptSpec, PromptSpec>> load_pair_set(const std::filesystem::path& file);

}  // namespace steerlab::synth
