#pragma once

#include "steerlab/model.hpp"
#include "steerlab/synth.hpp"

#include <functional>
#include <vector>

namespace steerlab::dit {

struct TrainExample {
  Matf z0;     // clean latent, F x d
  Matf c_emb;  // prompt embedding, C x d_c
};

// Streams (render_clean_latent, embed_prompt) pairs; must be a pure function
// of the index so training is reproducible for any worker count.
using DataSampler = std::function<TrainExample(uint64_t index)>;

struct TrainOptions {
  int batch = 16;
  float lr = 0.03f;
  float momentum = 0.9f;
  int workers = 0;  // 0 = hardware concurrency
};

struct TrainResult {
  Weights weights;
  std::vector<float> loss_curve;  // one entry per step
  float initial_loss = 0.0f;
  float final_loss = 0.0f;
};

// SGD with momentum on the epsilon-prediction loss. Gradients are accumulated
// per batch item and reduced in item order, so results do not depend on the
// worker count. Throws TrainingFault on divergence (loss > 10x initial).
TrainResult train(const ModelConfig& config, const DataSampler& sampler, int steps,
                  uint64_t seed, const TrainOptions& opts = {});

// The default training distribution over the synthetic vocabulary: each axis
// assigned with probability 3/4, each binary present with probability 1/3.
DataSampler make_dataset_sampler(const synth::ConceptVocabulary& vocab, uint64_t seed);

// Single-example loss and gradient; shared by training and the gradient check.
template <typename S>
S loss_and_grad(const WeightsT<S>& w, const Mat<S>& z_t, int t, const Mat<S>& c_emb,
                const Mat<S>& eps_target, WeightsT<S>* grad);

}  // namespace steerlab::dit
