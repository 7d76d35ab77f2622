#include "steerlab/sae.hpp"

#include "steerlab/parallel.hpp"
#include "steerlab/rng.hpp"
#include "steerlab/tensor_store.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

using nlohmann::json;

namespace steerlab::sae {

template <typename S>
std::vector<int> topk_support(const Vec<S>& pre, int k) {
  const int n = static_cast<int>(pre.size());
  k = std::min(k, n);
  std::vector<int> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&pre](int a, int b) {
    if (pre(a) != pre(b)) return pre(a) > pre(b);
    return a < b;
  });
  idx.resize(static_cast<size_t>(k));
  std::sort(idx.begin(), idx.end());
  return idx;
}

template <typename S>
Vec<S> sae_encode(const SaeParamsT<S>& p, const Vec<S>& h) {
  if (h.size() != p.input_dim()) throw ContractViolation("sae input dim mismatch");
  Vec<S> pre = p.w_enc * (h - p.b_pre);
  Vec<S> f = Vec<S>::Zero(pre.size());
  for (int j : topk_support(pre, p.k)) f(j) = pre(j);
  return f;
}

template <typename S>
Vec<S> sae_decode(const SaeParamsT<S>& p, const Vec<S>& f) {
  if (f.size() != p.latent_dim()) throw ContractViolation("sae code dim mismatch");
  return p.w_dec * f + p.b_pre;
}

template <typename S>
S sae_loss_grad(const SaeParamsT<S>& p, const Vec<S>& h, SaeParamsT<S>& grad,
                const std::vector<int>* fixed_support) {
  Vec<S> pre = p.w_enc * (h - p.b_pre);
  std::vector<int> support = fixed_support ? *fixed_support : topk_support(pre, p.k);
  Vec<S> f = Vec<S>::Zero(pre.size());
  for (int j : support) f(j) = pre(j);
  Vec<S> h_hat = p.w_dec * f + p.b_pre;
  Vec<S> e = h_hat - h;
  const S loss = e.squaredNorm();

  // dL/dW_dec = 2 e f^T (sparse columns)
  for (int j : support) grad.w_dec.col(j) += S(2) * e * f(j);
  // dL/df_j on the support, then back through the encoder
  Vec<S> x = h - p.b_pre;
  Vec<S> db_enc_path = Vec<S>::Zero(h.size());
  for (int j : support) {
    const S dfj = S(2) * p.w_dec.col(j).dot(e);
    grad.w_enc.row(j) += dfj * x.transpose();
    db_enc_path += dfj * p.w_enc.row(j).transpose();
  }
  grad.b_pre += S(2) * e - db_enc_path;
  return loss;
}

template std::vector<int> topk_support<float>(const Vec<float>&, int);
template std::vector<int> topk_support<double>(const Vec<double>&, int);
template Vec<float> sae_encode<float>(const SaeParamsT<float>&, const Vec<float>&);
template Vec<double> sae_encode<double>(const SaeParamsT<double>&, const Vec<double>&);
template Vec<float> sae_decode<float>(const SaeParamsT<float>&, const Vec<float>&);
template Vec<double> sae_decode<double>(const SaeParamsT<double>&, const Vec<double>&);
template float sae_loss_grad<float>(const SaeParamsT<float>&, const Vec<float>&,
                                    SaeParamsT<float>&, const std::vector<int>*);
template double sae_loss_grad<double>(const SaeParamsT<double>&, const Vec<double>&,
                                      SaeParamsT<double>&, const std::vector<int>*);

ActivationDataset harvest_activations(const dit::Weights& w,
                                      const synth::ConceptVocabulary& vocab,
                                      const std::vector<synth::PromptSpec>& specs,
                                      const std::vector<uint64_t>& seeds, int layer,
                                      int timestep_stride, uint64_t shuffle_seed, int workers) {
  require(!specs.empty(), "harvest_activations needs a non-empty spec list");
  require(!seeds.empty(), "harvest_activations needs at least one seed");
  require(layer >= 0 && layer < w.config.layers, "harvest layer out of range");
  require(timestep_stride >= 1, "timestep stride must be >= 1");

  const int F = w.config.frames, d = w.config.dim;
  const int kept_steps = (w.config.timesteps + timestep_stride - 1) / timestep_stride;
  const int per_item = F * kept_steps;
  const int n_items = static_cast<int>(specs.size() * seeds.size());

  ActivationDataset ds;
  ds.layer = layer;
  ds.timestep_stride = timestep_stride;
  ds.samples.resize(static_cast<int64_t>(n_items) * per_item, d);

  parallel_for(n_items, workers, [&](int item) {
    const size_t si = static_cast<size_t>(item) / seeds.size();
    const size_t ki = static_cast<size_t>(item) % seeds.size();
    int64_t row = static_cast<int64_t>(item) * per_item;
    dit::HookSet hooks;
    hooks.recorder = [&](int l, int t, const Matf&, const Matf&, const Matf& output) {
      if (l != layer || t % timestep_stride != 0) return;
      ds.samples.middleRows(row, F) = output;
      row += F;
    };
    const Matf c_emb = synth::embed_prompt(vocab, specs[si]);
    (void)dit::sample(w, c_emb, seeds[ki], &hooks);
  });

  // Seeded Fisher-Yates over rows.
  Rng rng(seed_mix({shuffle_seed, 0x5AEFull}));
  for (int64_t i = ds.samples.rows() - 1; i > 0; --i) {
    const int64_t j = static_cast<int64_t>(rng.below(static_cast<uint64_t>(i + 1)));
    if (i != j) ds.samples.row(i).swap(ds.samples.row(j));
  }
  return ds;
}

namespace {

struct BatchWorkspace {
  Matf pre, f, h_hat, e, df;
};

// One minibatch of SGD on X (B x d); returns summed squared error. Gradients
// flow through a fixed TopK mask chosen per sample (or per batch).
float sae_batch_step(SaeParamsT<float>& p, SaeParamsT<float>& vel, const Matf& X, float lr,
                     float momentum, bool batch_topk, std::vector<int>& fire_count,
                     BatchWorkspace& ws) {
  const int B = static_cast<int>(X.rows());
  const int md = p.latent_dim();
  Matf Xc = X;
  Xc.rowwise() -= p.b_pre.transpose();
  ws.pre.noalias() = Xc * p.w_enc.transpose();  // B x md
  ws.f = Matf::Zero(B, md);
  if (batch_topk) {
    const int total = std::min<int>(p.k * B, B * md);
    std::vector<int64_t> idx(static_cast<size_t>(B) * md);
    std::iota(idx.begin(), idx.end(), 0);
    const float* base = ws.pre.data();
    std::partial_sort(idx.begin(), idx.begin() + total, idx.end(), [base](int64_t a, int64_t b) {
      if (base[a] != base[b]) return base[a] > base[b];
      return a < b;
    });
    for (int i = 0; i < total; ++i) {
      const int64_t flat = idx[static_cast<size_t>(i)];
      ws.f.data()[flat] = base[flat];
      ++fire_count[static_cast<size_t>(flat % md)];
    }
  } else {
    for (int r = 0; r < B; ++r) {
      Vecf pre_row = ws.pre.row(r).transpose();
      for (int j : topk_support(pre_row, p.k)) {
        ws.f(r, j) = pre_row(j);
        ++fire_count[static_cast<size_t>(j)];
      }
    }
  }
  ws.h_hat.noalias() = ws.f * p.w_dec.transpose();  // B x d
  ws.h_hat.rowwise() += p.b_pre.transpose();
  ws.e = ws.h_hat - X;
  const float loss = ws.e.squaredNorm();

  // Gradients (mask fixed): dW_dec = 2 e^T f, df = 2 e W_dec masked,
  // dW_enc = df^T Xc, db = 2 sum(e) - (sum(df)) W_enc.
  Matf dw_dec = 2.0f * ws.e.transpose() * ws.f;  // d x md
  ws.df.noalias() = 2.0f * ws.e * p.w_dec;       // B x md
  ws.df = (ws.f.array() != 0.0f).select(ws.df, 0.0f);
  Matf dw_enc = ws.df.transpose() * Xc;  // md x d
  Vecf db = 2.0f * ws.e.colwise().sum().transpose() -
            (ws.df.colwise().sum() * p.w_enc).transpose();

  const float inv_b = 1.0f / static_cast<float>(B);
  vel.w_dec = momentum * vel.w_dec + dw_dec * inv_b;
  vel.w_enc = momentum * vel.w_enc + dw_enc * inv_b;
  vel.b_pre = momentum * vel.b_pre + db * inv_b;
  p.w_dec -= lr * vel.w_dec;
  p.w_enc -= lr * vel.w_enc;
  p.b_pre -= lr * vel.b_pre;

  // Decoder columns stay unit-norm.
  for (int j = 0; j < md; ++j) {
    const float n = p.w_dec.col(j).norm();
    if (n > 0.0f) p.w_dec.col(j) /= n;
  }
  return loss;
}

double mean_squared_error(const SaeParamsT<float>& p, const Matf& X, std::vector<int>* fires) {
  double total = 0.0;
  for (int r = 0; r < X.rows(); ++r) {
    Vecf h = X.row(r).transpose();
    Vecf f = sae_encode(p, h);
    if (fires)
      for (int j = 0; j < f.size(); ++j)
        if (f(j) != 0.0f) ++(*fires)[static_cast<size_t>(j)];
    total += (sae_decode(p, f) - h).squaredNorm();
  }
  return total / std::max<int>(1, static_cast<int>(X.rows()));
}

}  // namespace

SaeTrainResult train_sae(const ActivationDataset& dataset, int m, int k, int epochs,
                         uint64_t seed, const SaeTrainOptions& opts) {
  const int64_t N = dataset.samples.rows();
  const int d = static_cast<int>(dataset.samples.cols());
  const int md = m * d;
  require(k >= 1 && k <= md, "need 1 <= k <= m*d");
  require(N >= 10LL * md, "dataset too small: need at least 10 * m * d samples");

  const int64_t holdout = std::max<int64_t>(1, static_cast<int64_t>(N * opts.holdout_fraction));
  const int64_t train_n = N - holdout;
  const Matf train_X = dataset.samples.topRows(train_n);
  const Matf hold_X = dataset.samples.bottomRows(holdout);

  SaeTrainResult out;
  out.model.m = m;
  out.model.k = k;
  out.model.layer = dataset.layer;
  auto& p = out.model.params;
  p.k = k;
  Rng rng(seed_mix({seed, 0x5AE0ull}));
  p.w_dec.resize(d, md);
  fill_normal(p.w_dec, rng);
  for (int j = 0; j < md; ++j) p.w_dec.col(j) /= p.w_dec.col(j).norm();
  p.w_enc = p.w_dec.transpose();
  p.b_pre = train_X.colwise().mean().transpose();

  if (epochs <= 0) {
    out.report.trained = false;
    return out;
  }

  SaeParamsT<float> vel;
  vel.w_enc = Matf::Zero(md, d);
  vel.w_dec = Matf::Zero(d, md);
  vel.b_pre = Vecf::Zero(d);
  vel.k = k;

  std::vector<int64_t> order(static_cast<size_t>(train_n));
  std::iota(order.begin(), order.end(), 0);
  BatchWorkspace ws;
  Matf batch(opts.batch, d);

  for (int epoch = 0; epoch < epochs; ++epoch) {
    Rng erng(seed_mix({seed, 0xE60Cull, static_cast<uint64_t>(epoch)}));
    for (int64_t i = train_n - 1; i > 0; --i) {
      const int64_t j = static_cast<int64_t>(erng.below(static_cast<uint64_t>(i + 1)));
      std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
    }
    std::vector<int> fire_count(static_cast<size_t>(md), 0);
    double epoch_loss = 0.0;
    int64_t seen = 0;
    for (int64_t start = 0; start + opts.batch <= train_n; start += opts.batch) {
      for (int r = 0; r < opts.batch; ++r)
        batch.row(r) = train_X.row(order[static_cast<size_t>(start + r)]);
      epoch_loss += sae_batch_step(p, vel, batch, opts.lr, opts.momentum, opts.batch_topk,
                                   fire_count, ws);
      seen += opts.batch;
    }
    out.report.epoch_loss.push_back(
        static_cast<float>(epoch_loss / std::max<int64_t>(1, seen)));

    if (opts.resample_dead && epoch + 1 < epochs) {
      // Reinitialize features that never fired this epoch toward the residuals
      // of the worst-reconstructed samples.
      std::vector<int> dead;
      for (int j = 0; j < md; ++j)
        if (fire_count[static_cast<size_t>(j)] == 0) dead.push_back(j);
      if (!dead.empty()) {
        const int64_t probe_n = std::min<int64_t>(train_n, 2048);
        std::vector<std::pair<float, int64_t>> errs(static_cast<size_t>(probe_n));
        for (int64_t r = 0; r < probe_n; ++r) {
          Vecf h = train_X.row(r).transpose();
          Vecf rec = sae_decode(p, sae_encode(p, h));
          errs[static_cast<size_t>(r)] = {(rec - h).squaredNorm(), r};
        }
        std::sort(errs.begin(), errs.end(), [](const auto& a, const auto& b) {
          if (a.first != b.first) return a.first > b.first;
          return a.second < b.second;
        });
        double enc_scale = 0.0;
        for (int j = 0; j < md; ++j) enc_scale += p.w_enc.row(j).norm();
        enc_scale = 0.2 * enc_scale / md;
        for (size_t i = 0; i < dead.size(); ++i) {
          const int j = dead[i];
          Vecf h = train_X.row(errs[i % errs.size()].second).transpose();
          Vecf dir = h - sae_decode(p, sae_encode(p, h));
          const float n = dir.norm();
          if (n < 1e-12f) continue;
          dir /= n;
          p.w_dec.col(j) = dir;
          p.w_enc.row(j) = static_cast<float>(enc_scale) * dir.transpose();
          vel.w_dec.col(j).setZero();
          vel.w_enc.row(j).setZero();
          ++out.report.resampled_features;
        }
      }
    }
  }

  std::vector<int> fires(static_cast<size_t>(md), 0);
  const double hold_mse = mean_squared_error(p, hold_X, &fires);
  out.report.holdout_mse = hold_mse;
  Vecd mean = hold_X.colwise().mean().transpose().cast<double>();
  double var = 0.0;
  for (int r = 0; r < hold_X.rows(); ++r)
    var += (hold_X.row(r).transpose().cast<double>() - mean).squaredNorm();
  var /= std::max<int>(1, static_cast<int>(hold_X.rows()));
  out.report.explained_variance = var > 0.0 ? 1.0 - hold_mse / var : 0.0;

  const double n_hold = static_cast<double>(hold_X.rows());
  int dead = 0, high = 0;
  for (int j = 0; j < md; ++j) {
    const double rate = fires[static_cast<size_t>(j)] / n_hold;
    if (rate < 1e-5) ++dead;
    if (rate > 0.1) ++high;
  }
  out.report.dead_fraction = static_cast<double>(dead) / md;
  out.report.high_freq_fraction = static_cast<double>(high) / md;
  out.report.trained = true;
  return out;
}

FeatureScoreTable tfidf_scores(const SaeModel& model, const Matf& acts_pos, const Matf& acts_neg,
                               double epsilon) {
  require(acts_pos.rows() > 0 && acts_neg.rows() > 0, "tfidf needs non-empty activation sets");
  const int md = model.params.latent_dim();
  FeatureScoreTable table;
  table.epsilon = epsilon;
  table.mu_pos = Vecd::Zero(md);
  table.mu_neg = Vecd::Zero(md);
  for (int r = 0; r < acts_pos.rows(); ++r)
    table.mu_pos += sae_encode(model.params, Vecf(acts_pos.row(r).transpose())).cast<double>();
  table.mu_pos /= static_cast<double>(acts_pos.rows());
  for (int r = 0; r < acts_neg.rows(); ++r)
    table.mu_neg += sae_encode(model.params, Vecf(acts_neg.row(r).transpose())).cast<double>();
  table.mu_neg /= static_cast<double>(acts_neg.rows());

  table.scores = Vecd::Zero(md);
  for (int j = 0; j < md; ++j) {
    const double idf = std::log(1.0 + 1.0 / (std::max(table.mu_neg(j), 0.0) + epsilon));
    table.scores(j) = table.mu_pos(j) * idf;
  }
  return table;
}

std::vector<int> select_features(const FeatureScoreTable& table, int tau) {
  require(tau >= 1, "tau must be >= 1");
  std::vector<int> idx;
  for (int j = 0; j < table.scores.size(); ++j)
    if (table.scores(j) > 0.0) idx.push_back(j);
  std::stable_sort(idx.begin(), idx.end(), [&table](int a, int b) {
    if (table.scores(a) != table.scores(b)) return table.scores(a) > table.scores(b);
    return a < b;
  });
  if (static_cast<int>(idx.size()) > tau) idx.resize(static_cast<size_t>(tau));
  std::sort(idx.begin(), idx.end());
  return idx;
}

steer::SteeringVector build_sae_steering_vector(const SaeModel& model,
                                                const std::vector<int>& features,
                                                int total_layers, int timesteps,
                                                const std::string& concept_name) {
  require(!features.empty(), "feature set must be non-empty");
  Vecf v = Vecf::Zero(model.params.input_dim());
  for (int j : features) v += model.params.w_dec.col(j);
  steer::SteeringVector vec;
  vec.concept_name = concept_name;
  vec.method = steer::SteeringVector::Method::SAE;
  vec.norm_policy = steer::SteeringVector::NormPolicy::PlainAdd;
  vec.layers = total_layers;
  vec.timesteps = timesteps;
  vec.time_averaged = true;
  vec.source_layer = model.layer;
  vec.directions.assign(static_cast<size_t>(total_layers), {});
  vec.directions[static_cast<size_t>(model.layer)] = {v};
  vec.alpha_scale = 1.0;
  return vec;
}

Latent apply_sae_steering(const dit::Weights& w, const synth::ConceptVocabulary& vocab,
                          const synth::PromptSpec& spec, const steer::SteeringVector& vec,
                          double alpha, int layer, uint64_t seed) {
  require(vec.method == steer::SteeringVector::Method::SAE,
          "apply_sae_steering needs an SAE vector");
  return steer::apply_steering(w, vocab, spec, vec, alpha, {layer}, seed);
}

SweepResult sweep_sae(const ActivationDataset& dataset, const std::vector<int>& m_grid,
                      const std::vector<int>& k_grid, int epochs, uint64_t seed,
                      const SaeTrainOptions& opts) {
  constexpr double kDeadMax = 0.2;
  constexpr double kHighFreqMax = 0.5;
  SweepResult result;
  for (int m : m_grid)
    for (int k : k_grid) {
      if (k > m * static_cast<int>(dataset.samples.cols())) continue;
      SaeTrainResult r = train_sae(dataset, m, k, epochs, seed, opts);
      SweepEntry e;
      e.m = m;
      e.k = k;
      e.explained_variance = r.report.explained_variance;
      e.dead_fraction = r.report.dead_fraction;
      e.high_freq_fraction = r.report.high_freq_fraction;
      e.holdout_mse = r.report.holdout_mse;
      e.feasible = e.dead_fraction < kDeadMax && e.high_freq_fraction < kHighFreqMax;
      result.entries.push_back(e);
    }
  double best = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < result.entries.size(); ++i) {
    const auto& e = result.entries[i];
    if (e.feasible && e.holdout_mse < best) {
      best = e.holdout_mse;
      result.best_index = static_cast<int>(i);
    }
  }
  if (result.best_index < 0) {  // nothing feasible: fall back to minimum error
    for (size_t i = 0; i < result.entries.size(); ++i)
      if (result.entries[i].holdout_mse < best) {
        best = result.entries[i].holdout_mse;
        result.best_index = static_cast<int>(i);
      }
  }
  return result;
}

void save_sae(const std::filesystem::path& dir, const SaeModel& model, const json& extra_meta) {
  json meta = extra_meta;
  meta["m"] = model.m;
  meta["k"] = model.k;
  meta["layer"] = model.layer;
  write_container(dir,
                  {NamedTensor::from_matrix("w_enc", model.params.w_enc),
                   NamedTensor::from_matrix("w_dec", model.params.w_dec),
                   NamedTensor::from_vector("b_pre", model.params.b_pre)},
                  meta);
}

SaeModel load_sae(const std::filesystem::path& dir, json* meta_out) {
  json meta;
  TensorMap tensors = read_container(dir, &meta);
  SaeModel model;
  model.m = meta.at("m").get<int>();
  model.k = meta.at("k").get<int>();
  model.layer = meta.at("layer").get<int>();
  model.params.w_enc = tensors.at("w_enc").to_matrix();
  model.params.w_dec = tensors.at("w_dec").to_matrix();
  model.params.b_pre = tensors.at("b_pre").to_vector();
  model.params.k = model.k;
  if (meta_out) *meta_out = meta;
  return model;
}

}  // namespace steerlab::sae
