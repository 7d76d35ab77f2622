#pragma once

#include "steerlab/caa.hpp"
#include "steerlab/synth.hpp"

#include <nlohmann/json_fwd.hpp>

#include <filesystem>
#include <string>
#include <vector>

// TopK sparse autoencoder on cross-attention outputs of one layer, TF-IDF
// feature scoring against counterfactual activation sets, and SAE steering
// vectors built from decoder columns.

namespace steerlab::sae {

template <typename S>
struct SaeParamsT {
  Mat<S> w_enc;  // (m*d) x d
  Mat<S> w_dec;  // d x (m*d)
  Vec<S> b_pre;  // d
  int k = 1;

  int latent_dim() const { return static_cast<int>(w_enc.rows()); }
  int input_dim() const { return static_cast<int>(w_enc.cols()); }
};

struct SaeModel {
  SaeParamsT<float> params;
  int m = 4;
  int k = 64;
  int layer = -1;  // source layer of the training activations
};

// Indices of the k largest pre-activations, ties broken by lowest index.
// Returned ascending for stable masking.
template <typename S>
std::vector<int> topk_support(const Vec<S>& pre, int k);

template <typename S>
Vec<S> sae_encode(const SaeParamsT<S>& p, const Vec<S>& h);

template <typename S>
Vec<S> sae_decode(const SaeParamsT<S>& p, const Vec<S>& f);

// Reconstruction loss ||h - h_hat||^2 and its gradients. When fixed_support is
// given the TopK mask is held at those indices (used by the gradient check).
template <typename S>
S sae_loss_grad(const SaeParamsT<S>& p, const Vec<S>& h, SaeParamsT<S>& grad,
                const std::vector<int>* fixed_support = nullptr);

struct ActivationDataset {
  Matf samples;  // N x d, one cross-attention output frame per row
  int layer = -1;
  int timestep_stride = 1;
  std::string corpus_id;
};

// Captures cross-attention outputs at `layer` across generations; every frame
// of every captured output at timesteps with t % stride == 0 becomes one
// sample. The dataset is shuffled with `shuffle_seed`.
ActivationDataset harvest_activations(const dit::Weights& w,
                                      const synth::ConceptVocabulary& vocab,
                                      const std::vector<synth::PromptSpec>& specs,
                                      const std::vector<uint64_t>& seeds, int layer,
                                      int timestep_stride, uint64_t shuffle_seed,
                                      int workers = 0);

struct SaeTrainOptions {
  float lr = 3e-4f;
  float momentum = 0.9f;
  int batch = 64;
  double holdout_fraction = 0.1;
  bool batch_topk = false;     // BatchTopK training variant (per-sample TopK is default)
  bool resample_dead = true;   // reinitialize never-firing features between epochs
  int workers = 0;
};

struct SaeTrainReport {
  std::vector<float> epoch_loss;       // mean squared reconstruction error per epoch
  double holdout_mse = 0.0;
  double explained_variance = 0.0;     // held-out
  double dead_fraction = 0.0;          // fires on < 1e-5 of held-out samples
  double high_freq_fraction = 0.0;     // fires on > 0.1 of held-out samples
  bool trained = false;
  int resampled_features = 0;
};

struct SaeTrainResult {
  SaeModel model;
  SaeTrainReport report;
};

SaeTrainResult train_sae(const ActivationDataset& dataset, int m, int k, int epochs,
                         uint64_t seed, const SaeTrainOptions& opts = {});

struct FeatureScoreTable {
  Vecd scores;  // per feature
  Vecd mu_pos, mu_neg;
  double epsilon = 1e-6;
};

// score(j) = mu_j(pos) * ln(1 + 1 / (max(mu_j(neg), 0) + eps)); means are taken
// over all supplied samples of each side.
FeatureScoreTable tfidf_scores(const SaeModel& model, const Matf& acts_pos,
                               const Matf& acts_neg, double epsilon = 1e-6);

// Indices of the tau highest positive scores (lowest index wins ties),
// ascending. |result| = min(tau, number of strictly positive scores).
std::vector<int> select_features(const FeatureScoreTable& table, int tau);

// v = sum of the selected decoder columns, stored unnormalized and replicated
// across all timesteps.
steer::SteeringVector build_sae_steering_vector(const SaeModel& model,
                                                const std::vector<int>& features,
                                                int total_layers, int timesteps,
                                                const std::string& concept_name);

// h' = h + alpha * v at the single layer; no renormalization.
Latent apply_sae_steering(const dit::Weights& w, const synth::ConceptVocabulary& vocab,
                          const synth::PromptSpec& spec, const steer::SteeringVector& vec,
                          double alpha, int layer, uint64_t seed);

struct SweepEntry {
  int m = 0, k = 0;
  double holdout_mse = 0.0;
  double explained_variance = 0.0;
  double dead_fraction = 0.0;
  double high_freq_fraction = 0.0;
  bool feasible = false;
};

struct SweepResult {
  std::vector<SweepEntry> entries;
  int best_index = -1;  // feasibility thresholds first, then minimum error
};

SweepResult sweep_sae(const ActivationDataset& dataset, const std::vector<int>& m_grid,
                      const std::vector<int>& k_grid, int epochs, uint64_t seed,
                      const SaeTrainOptions& opts = {});

void save_sae(const std::filesystem::path& dir, const SaeModel& model,
              const nlohmann::json& extra_meta);
SaeModel load_sae(const std::filesystem::path& dir, nlohmann::json* meta_out = nullptr);

}  // namespace steerlab::sae
