#pragma once

#include "steerlab/common.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace steerlab::dit {

struct ModelConfig {
  int layers = 8;      // L, number of transformer blocks (one cross-attention each)
  int dim = 64;        // d, model width == latent channels
  int heads = 4;
  int prompt_dim = 32;  // d_c
  int frames = 64;      // F
  int timesteps = 50;   // T

  int head_dim() const { return dim / heads; }
  int ffn_hidden() const { return 2 * dim; }

  // Shape consistency only; any sizes that fit together are computable.
  void check_shapes() const;
  // Full user-facing validation (L >= 4, T >= 10, ...). The CLI always calls
  // this; tests may build smaller instances directly.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

struct NoiseSchedule {
  Vecf alpha_bar;       // strictly decreasing, in (0, 1]
  Vecf sqrt_ab;
  Vecf sqrt_one_minus_ab;

  static NoiseSchedule linear(int timesteps, float start = 0.9999f, float end = 0.02f);
  void check() const;
};

NoiseSchedule make_schedule(const ModelConfig& config);

template <typename S>
struct BlockWeightsT {
  Vec<S> ln1_g, ln1_b, ln2_g, ln2_b, ln3_g, ln3_b;
  Mat<S> sa_wq, sa_wk, sa_wv, sa_wo;  // d x d
  Mat<S> ca_wq;                       // d x d
  Mat<S> ca_wk, ca_wv;                // d_c x d
  Mat<S> ca_wo;                       // d x d
  Mat<S> ff_w1;                       // d x h
  Vec<S> ff_b1;
  Mat<S> ff_w2;                       // h x d
  Vec<S> ff_b2;
};

template <typename S>
struct WeightsT {
  ModelConfig config;
  Mat<S> in_w;       // d x d
  Vec<S> in_b;
  Mat<S> time_table;  // T x d
  std::vector<BlockWeightsT<S>> blocks;
  Vec<S> lnf_g, lnf_b;
  Mat<S> out_w;  // d x d
  Vec<S> out_b;
  Mat<S> pos_table;  // F x d, fixed sinusoidal (not a parameter)
};

using Weights = WeightsT<float>;

// One learnable tensor, exposed uniformly for updates / checks / serialization.
template <typename S>
struct ParamRef {
  std::string name;
  S* data;
  int64_t rows, cols;  // cols == 1 for vectors
  int64_t size() const { return rows * cols; }
};

template <typename S>
std::vector<ParamRef<S>> collect_params(WeightsT<S>& w);

// Zero-valued gradient buffers with the same tensor layout.
template <typename S>
WeightsT<S> make_zero_like(const WeightsT<S>& w);

template <typename S>
void set_zero(WeightsT<S>& w);

template <typename To, typename From>
WeightsT<To> cast_weights(const WeightsT<From>& w);

Weights init_weights(const ModelConfig& config, uint64_t seed);

Matf sinusoidal_positions(int frames, int dim);

void save_checkpoint(const std::filesystem::path& dir, const Weights& w,
                     const nlohmann::json& meta);
Weights load_checkpoint(const std::filesystem::path& dir, nlohmann::json* meta_out = nullptr);

}  // namespace steerlab::dit
