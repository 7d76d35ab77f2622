#include "steerlab/sample.hpp"

#include "steerlab/rng.hpp"

namespace steerlab::dit {

Latent initial_noise(const ModelConfig& config, uint64_t seed) {
  Rng rng(seed_mix({seed, 0x5A3Full}));
  Latent z(config.frames, config.dim);
  fill_normal(z, rng);
  return z;
}

Latent sample(const Weights& w, const Matf& c_emb, uint64_t seed, const HookSet* hooks) {
  const auto& cfg = w.config;
  const NoiseSchedule sched = make_schedule(cfg);
  Latent z = initial_noise(cfg, seed);
  for (int t = cfg.timesteps - 1; t >= 0; --t) {
    Matf eps = forward_denoise<float>(w, z, t, c_emb, hooks, nullptr);
    Matf x0 = (z - sched.sqrt_one_minus_ab(t) * eps) / sched.sqrt_ab(t);
    if (t > 0)
      z = sched.sqrt_ab(t - 1) * x0 + sched.sqrt_one_minus_ab(t - 1) * eps;
    else
      z = std::move(x0);
    if (!z.allFinite())
      throw NumericFault("non-finite latent at timestep " + std::to_string(t));
  }
  return z;
}

}  // namespace steerlab::dit
