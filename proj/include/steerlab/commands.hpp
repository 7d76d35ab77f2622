#pragma once

#include "steerlab/caa.hpp"
#include "steerlab/config.hpp"
#include "steerlab/evalx.hpp"
#include "steerlab/patching.hpp"
#include "steerlab/sae.hpp"
#include "steerlab/store.hpp"

#include <optional>
#include <string>

// Pipeline stages behind the CLI subcommands. Each writes provenance-stamped
// artifacts into the store; each returns the process exit code.

namespace steerlab::cmd {

// Exit codes (also used by the CLI entry point).
constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kMissingArtifact = 3;
constexpr int kNumericFault = 4;
constexpr int kAcceptanceFailure = 5;

int train_model_cmd(const ExperimentConfig& cfg, ArtifactStore& store);
int trace_cmd(const ExperimentConfig& cfg, ArtifactStore& store);
int steer_cmd(const ExperimentConfig& cfg, ArtifactStore& store,
              const std::string& method, const std::string& concept_name,
              std::optional<double> alpha, bool sweep);
int train_sae_cmd(const ExperimentConfig& cfg, ArtifactStore& store, bool sweep);
int eval_cmd(const ExperimentConfig& cfg, ArtifactStore& store);
int report_cmd(const ExperimentConfig& cfg, ArtifactStore& store);

// Maps the library exceptions onto exit codes, printing the message to stderr.
int guard(const std::function<int()>& body);

// Shared building blocks (also used by the acceptance suite).

patch::ImpactOptions impact_options(const ExperimentConfig& cfg);

// Contrastive collection at all layers -> CAA vector with an activation-scaled
// alpha grid endpoint.
steer::SteeringVector build_caa_vector(const ExperimentConfig& cfg, const dit::Weights& w,
                                       const synth::ConceptVocabulary& vocab,
                                       const synth::ConceptId& concept_id);

// Harvested activations at `layer` for the two sides of the concept's
// counterfactual pairs (for TF-IDF scoring).
std::pair<sae::ActivationDataset, sae::ActivationDataset> harvest_contrastive(
    const ExperimentConfig& cfg, const dit::Weights& w, const synth::ConceptVocabulary& vocab,
    const synth::ConceptId& concept_id, int layer);

steer::SteeringVector build_sae_vector(const ExperimentConfig& cfg, const sae::SaeModel& model,
                                       const dit::Weights& w,
                                       const synth::ConceptVocabulary& vocab,
                                       const synth::ConceptId& concept_id,
                                       double median_row_norm);

// Effective alpha grid for a steering vector under the config's preset.
std::vector<double> alpha_grid_for(const ExperimentConfig& cfg,
                                   const steer::SteeringVector& vec);

// Layer policies (functional / complement / all) resolved from an impact matrix.
std::vector<evalx::PolicySpec> make_policies(const ExperimentConfig& cfg,
                                             const patch::ImpactMatrix& matrix, bool with_sae);

std::string eval_report_csv(const evalx::EvalReport& report, const std::string& provenance);
nlohmann::json eval_report_json(const evalx::EvalReport& report);

}  // namespace steerlab::cmd
