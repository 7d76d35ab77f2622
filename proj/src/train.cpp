#include "steerlab/train.hpp"

#include "steerlab/forward.hpp"
#include "steerlab/parallel.hpp"
#include "steerlab/rng.hpp"

#include <cmath>

namespace steerlab::dit {

template <typename S>
S loss_and_grad(const WeightsT<S>& w, const Mat<S>& z_t, int t, const Mat<S>& c_emb,
                const Mat<S>& eps_target, WeightsT<S>* grad) {
  ForwardTrace<S> trace;
  Mat<S> eps_hat = forward_denoise<S>(w, z_t, t, c_emb, nullptr, grad ? &trace : nullptr);
  Mat<S> diff = eps_hat - eps_target;
  const S denom = static_cast<S>(diff.size());
  const S loss = diff.squaredNorm() / denom;
  if (grad) {
    Mat<S> d_eps = diff * (S(2) / denom);
    backward_denoise<S>(w, trace, c_emb, d_eps, *grad);
  }
  return loss;
}

template float loss_and_grad<float>(const WeightsT<float>&, const Mat<float>&, int,
                                    const Mat<float>&, const Mat<float>&, WeightsT<float>*);
template double loss_and_grad<double>(const WeightsT<double>&, const Mat<double>&, int,
                                      const Mat<double>&, const Mat<double>&,
                                      WeightsT<double>*);

DataSampler make_dataset_sampler(const synth::ConceptVocabulary& vocab, uint64_t seed) {
  return [vocab, seed](uint64_t index) {
    Rng rng(seed_mix({vocab.seed, seed, 0xDA7Aull, index}));
    synth::PromptSpec spec;
    for (int a = 0; a < static_cast<int>(vocab.axes.size()); ++a)
      if (rng.below(4) != 0) spec.assignments[a] = static_cast<int>(rng.below(2));
    for (int b = 0; b < static_cast<int>(vocab.binaries.size()); ++b)
      if (rng.below(3) == 0) spec.presences.insert(b);
    spec.style_seed = static_cast<uint32_t>(rng.next());
    const size_t limit = static_cast<size_t>(vocab.config.ctx_tokens) - 1;
    while (spec.assignments.size() + spec.presences.size() > limit) {
      if (!spec.presences.empty())
        spec.presences.erase(std::prev(spec.presences.end()));
      else
        spec.assignments.erase(std::prev(spec.assignments.end()));
    }
    TrainExample ex;
    ex.z0 = synth::render_clean_latent(vocab, spec, rng.next());
    ex.c_emb = synth::embed_prompt(vocab, spec);
    return ex;
  };
}

TrainResult train(const ModelConfig& config, const DataSampler& sampler, int steps,
                  uint64_t seed, const TrainOptions& opts) {
  config.check_shapes();
  const NoiseSchedule sched = make_schedule(config);
  TrainResult result;
  result.weights = init_weights(config, seed);
  if (steps <= 0) return result;

  const int B = opts.batch;
  Weights velocity = make_zero_like(result.weights);
  std::vector<Weights> item_grads(static_cast<size_t>(B), make_zero_like(result.weights));
  std::vector<float> item_loss(static_cast<size_t>(B), 0.0f);

  auto vel_params = collect_params(velocity);
  auto w_params = collect_params(result.weights);
  std::vector<std::vector<ParamRef<float>>> grad_params;
  grad_params.reserve(static_cast<size_t>(B));
  for (auto& g : item_grads) grad_params.push_back(collect_params(g));

  float initial_loss = 0.0f;
  for (int step = 0; step < steps; ++step) {
    const Weights& w = result.weights;
    parallel_for(B, opts.workers, [&](int bi) {
      const uint64_t index = static_cast<uint64_t>(step) * B + bi;
      TrainExample ex = sampler(index);
      Rng rng(seed_mix({seed, 0x7EA1ull, index}));
      const int t = static_cast<int>(rng.below(static_cast<uint64_t>(config.timesteps)));
      Matf noise(ex.z0.rows(), ex.z0.cols());
      fill_normal(noise, rng);
      Matf z_t = sched.sqrt_ab(t) * ex.z0 + sched.sqrt_one_minus_ab(t) * noise;
      set_zero(item_grads[static_cast<size_t>(bi)]);
      item_loss[static_cast<size_t>(bi)] =
          loss_and_grad<float>(w, z_t, t, ex.c_emb, noise, &item_grads[static_cast<size_t>(bi)]);
    });

    double loss_sum = 0.0;
    for (int bi = 0; bi < B; ++bi) loss_sum += item_loss[static_cast<size_t>(bi)];
    const float loss = static_cast<float>(loss_sum / B);
    if (step == 0) initial_loss = loss;
    if (!std::isfinite(loss) || loss > 10.0f * initial_loss)
      throw TrainingFault("training diverged at step " + std::to_string(step) + ": loss " +
                          std::to_string(loss) + " vs initial " + std::to_string(initial_loss));

    // Reduce per-item gradients in item order, then SGD-with-momentum update.
    const float inv_b = 1.0f / static_cast<float>(B);
    for (size_t p = 0; p < w_params.size(); ++p) {
      auto& acc = grad_params[0][p];
      for (int bi = 1; bi < B; ++bi) {
        const auto& g = grad_params[static_cast<size_t>(bi)][p];
        for (int64_t i = 0; i < acc.size(); ++i) acc.data[i] += g.data[i];
      }
      auto& vel = vel_params[p];
      auto& wp = w_params[p];
      for (int64_t i = 0; i < acc.size(); ++i) {
        vel.data[i] = opts.momentum * vel.data[i] + acc.data[i] * inv_b;
        wp.data[i] -= opts.lr * vel.data[i];
      }
    }
    result.loss_curve.push_back(loss);
  }
  result.initial_loss = initial_loss;
  result.final_loss = result.loss_curve.back();
  return result;
}

}  // namespace steerlab::dit
