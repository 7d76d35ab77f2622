#pragma once

#include "steerlab/forward.hpp"
#include "steerlab/model.hpp"

#include <cstdint>

namespace steerlab::dit {

// Deterministic DDIM-style (eta = 0) reverse trajectory from seeded Gaussian
// noise through all T steps. The starting noise depends only on the seed and
// shape, never the prompt, so cached-K/V substitution experiments can compare
// runs like for like. Hooks fire at every (layer, timestep).
Latent sample(const Weights& w, const Matf& c_emb, uint64_t seed,
              const HookSet* hooks = nullptr);

// The z_T drawn for a given seed (exposed for tests).
Latent initial_noise(const ModelConfig& config, uint64_t seed);

}  // namespace steerlab::dit
