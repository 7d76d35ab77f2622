#include "steerlab/caa.hpp"

#include "steerlab/parallel.hpp"
#include "steerlab/rng.hpp"
#include "steerlab/tensor_store.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>

using nlohmann::json;

namespace steerlab::steer {

bool SteeringVector::has(int layer, int t) const {
  if (layer < 0 || layer >= static_cast<int>(directions.size())) return false;
  const auto& row = directions[static_cast<size_t>(layer)];
  const int idx = time_averaged ? 0 : t;
  return idx < static_cast<int>(row.size()) && row[static_cast<size_t>(idx)].size() > 0;
}

const Vecf& SteeringVector::at(int layer, int t) const {
  if (!has(layer, t))
    throw ContractViolation("steering vector missing direction at layer " +
                            std::to_string(layer) + ", timestep " + std::to_string(t));
  return directions[static_cast<size_t>(layer)][time_averaged ? 0 : static_cast<size_t>(t)];
}

CollectedOutputs collect_attn_outputs(const dit::Weights& w,
                                      const synth::ConceptVocabulary& vocab,
                                      const std::vector<synth::PromptSpec>& specs,
                                      const std::vector<uint64_t>& seeds,
                                      const std::vector<int>& layers, int workers) {
  require(!specs.empty(), "collect_attn_outputs needs at least one spec");
  require(!seeds.empty(), "collect_attn_outputs needs at least one seed");
  CollectedOutputs out;
  out.layers = layers;
  std::sort(out.layers.begin(), out.layers.end());
  out.total_layers = w.config.layers;
  out.timesteps = w.config.timesteps;
  const int T = w.config.timesteps, d = w.config.dim;
  const int nl = static_cast<int>(out.layers.size());

  std::vector<int> layer_pos(static_cast<size_t>(w.config.layers), -1);
  for (int i = 0; i < nl; ++i) layer_pos[static_cast<size_t>(out.layers[i])] = i;

  struct ItemResult {
    std::vector<Vecf> grid;        // nl * T mean-over-frames vectors
    std::vector<float> row_norms;  // per-frame norms at captured layers
  };
  const int n_items = static_cast<int>(specs.size() * seeds.size());
  std::vector<ItemResult> items(static_cast<size_t>(n_items));

  parallel_for(n_items, workers, [&](int item) {
    const size_t si = static_cast<size_t>(item) / seeds.size();
    const size_t ki = static_cast<size_t>(item) % seeds.size();
    ItemResult& res = items[static_cast<size_t>(item)];
    res.grid.assign(static_cast<size_t>(nl * T), Vecf());
    res.row_norms.reserve(static_cast<size_t>(nl * T));
    dit::HookSet hooks;
    hooks.recorder = [&](int layer, int t, const Matf&, const Matf&, const Matf& output) {
      const int pos = layer_pos[static_cast<size_t>(layer)];
      if (pos < 0) return;
      res.grid[static_cast<size_t>(pos * T + t)] =
          output.colwise().mean().transpose();
      res.row_norms.push_back(output.rowwise().norm().mean());
    };
    const Matf c_emb = synth::embed_prompt(vocab, specs[si]);
    (void)dit::sample(w, c_emb, seeds[ki], &hooks);
  });

  // Average over seeds per spec, in seed order.
  out.per_spec.resize(specs.size());
  const double inv_seeds = 1.0 / static_cast<double>(seeds.size());
  for (size_t si = 0; si < specs.size(); ++si) {
    auto& grid = out.per_spec[si];
    grid.assign(static_cast<size_t>(nl), std::vector<Vecf>(static_cast<size_t>(T)));
    for (int li = 0; li < nl; ++li)
      for (int t = 0; t < T; ++t) {
        Vecd acc = Vecd::Zero(d);
        for (size_t ki = 0; ki < seeds.size(); ++ki) {
          const auto& item = items[si * seeds.size() + ki];
          acc += item.grid[static_cast<size_t>(li * T + t)].cast<double>();
        }
        grid[static_cast<size_t>(li)][static_cast<size_t>(t)] =
            (acc * inv_seeds).cast<float>();
      }
  }

  std::vector<float> norms;
  for (const auto& item : items)
    norms.insert(norms.end(), item.row_norms.begin(), item.row_norms.end());
  if (!norms.empty()) {
    std::sort(norms.begin(), norms.end());
    out.median_row_norm = norms[norms.size() / 2];
  }
  return out;
}

SteeringVector compute_caa_vector(const CollectedOutputs& pos, const CollectedOutputs& neg,
                                  const std::string& concept_name) {
  require(pos.layers == neg.layers, "pos/neg collections cover different layers");
  require(pos.timesteps == neg.timesteps, "pos/neg collections cover different timesteps");
  require(pos.per_spec.size() == neg.per_spec.size() && !pos.per_spec.empty(),
          "pos/neg collections must pair up with equal counts");

  SteeringVector vec;
  vec.concept_name = concept_name;
  vec.method = SteeringVector::Method::CAA;
  vec.norm_policy = SteeringVector::NormPolicy::Renorm;
  vec.layers = pos.total_layers;
  vec.timesteps = pos.timesteps;
  vec.directions.assign(static_cast<size_t>(pos.total_layers), {});
  for (int l = 0; l < pos.total_layers; ++l)
    vec.directions[static_cast<size_t>(l)].assign(static_cast<size_t>(pos.timesteps), Vecf());

  const size_t N = pos.per_spec.size();
  for (size_t li = 0; li < pos.layers.size(); ++li) {
    const int layer = pos.layers[li];
    for (int t = 0; t < pos.timesteps; ++t) {
      Vecd v = Vecd::Zero(pos.per_spec[0][li][static_cast<size_t>(t)].size());
      for (size_t i = 0; i < N; ++i)
        v += (pos.per_spec[i][li][static_cast<size_t>(t)] -
              neg.per_spec[i][li][static_cast<size_t>(t)])
                 .cast<double>();
      v /= static_cast<double>(N);
      const double norm = v.norm();
      if (norm >= 1e-9)
        vec.directions[static_cast<size_t>(layer)][static_cast<size_t>(t)] =
            (v / norm).cast<float>();
    }
  }
  vec.alpha_scale = 2.0 * 0.5 * (pos.median_row_norm + neg.median_row_norm);
  return vec;
}

Matf renorm(const Matf& h_steered, const Matf& h_orig, bool* warned) {
  const float steered_norm = h_steered.norm();
  if (steered_norm <= 0.0f) {
    if (warned) *warned = true;
    return h_orig;
  }
  return h_steered * (h_orig.norm() / steered_norm);
}

Latent apply_steering(const dit::Weights& w, const synth::ConceptVocabulary& vocab,
                      const synth::PromptSpec& spec, const SteeringVector& vec, double alpha,
                      const std::set<int>& layer_set, uint64_t seed, const SteerOptions& opts) {
  for (int l : layer_set) {
    if (l < 0 || l >= w.config.layers)
      throw ContractViolation("steering layer " + std::to_string(l) + " out of range");
    for (int t = 0; t < w.config.timesteps; ++t)
      if (!vec.has(l, t))
        throw ContractViolation("steering vector missing direction at layer " +
                                std::to_string(l) + ", timestep " + std::to_string(t));
  }
  const Matf c_emb = synth::embed_prompt(vocab, spec);
  if (alpha == 0.0 || layer_set.empty()) return dit::sample(w, c_emb, seed);

  const bool use_renorm =
      vec.norm_policy == SteeringVector::NormPolicy::Renorm && opts.renorm_enabled;
  const float a = static_cast<float>(alpha);
  dit::HookSet hooks;
  hooks.output_interceptor = [&vec, &layer_set, a, use_renorm, &opts](int layer, int t,
                                                                      Matf& out) {
    if (layer_set.count(layer) == 0) return;
    const Vecf& dir = vec.at(layer, t);
    const float pre_norm = out.norm();
    if (use_renorm && opts.per_frame_renorm) {
      Matf steered = out;
      steered.rowwise() += (a * dir).transpose();
      for (Eigen::Index r = 0; r < out.rows(); ++r) {
        const float sn = steered.row(r).norm();
        out.row(r) = sn > 0.0f ? Matf(steered.row(r) * (out.row(r).norm() / sn))
                               : Matf(out.row(r));
      }
    } else {
      Matf steered = out;
      steered.rowwise() += (a * dir).transpose();
      out = use_renorm ? renorm(steered, out) : steered;
    }
    if (opts.norm_log) opts.norm_log->emplace_back(pre_norm, out.norm());
  };
  return dit::sample(w, c_emb, seed, &hooks);
}

Latent apply_caa(const dit::Weights& w, const synth::ConceptVocabulary& vocab,
                 const synth::PromptSpec& spec, const SteeringVector& vec, double alpha,
                 const std::set<int>& layer_set, uint64_t seed, const SteerOptions& opts) {
  require(vec.method == SteeringVector::Method::CAA, "apply_caa needs a CAA vector");
  return apply_steering(w, vocab, spec, vec, alpha, layer_set, seed, opts);
}

SteeringVector average_over_time(const SteeringVector& vec) {
  SteeringVector out = vec;
  out.time_averaged = true;
  out.directions.assign(static_cast<size_t>(vec.layers), {});
  for (int l = 0; l < vec.layers; ++l) {
    Vecd acc;
    int n = 0;
    for (const auto& d : vec.directions[static_cast<size_t>(l)]) {
      if (d.size() == 0) continue;
      if (n == 0) acc = Vecd::Zero(d.size());
      acc += d.cast<double>();
      ++n;
    }
    std::vector<Vecf> row(1);
    if (n > 0) {
      acc /= n;
      if (vec.method == SteeringVector::Method::CAA) {
        const double norm = acc.norm();
        if (norm >= 1e-9) row[0] = (acc / norm).cast<float>();
      } else {
        row[0] = acc.cast<float>();
      }
    }
    out.directions[static_cast<size_t>(l)] = std::move(row);
  }
  return out;
}

void save_steering_vector(const std::filesystem::path& dir, const SteeringVector& vec,
                          const json& extra_meta) {
  json meta = extra_meta;
  meta["concept"] = vec.concept_name;
  meta["method"] = vec.method == SteeringVector::Method::CAA ? "caa" : "sae";
  meta["norm_policy"] =
      vec.norm_policy == SteeringVector::NormPolicy::Renorm ? "renorm" : "plain-add";
  meta["layers"] = vec.layers;
  meta["timesteps"] = vec.timesteps;
  meta["time_averaged"] = vec.time_averaged;
  meta["source_layer"] = vec.source_layer;
  meta["alpha_scale"] = vec.alpha_scale;

  const int T_eff = vec.time_averaged ? 1 : vec.timesteps;
  int dim = 0;
  for (const auto& row : vec.directions)
    for (const auto& d : row)
      if (d.size() > 0) dim = static_cast<int>(d.size());
  Matf dirs = Matf::Zero(vec.layers * T_eff, dim);
  Vecf mask = Vecf::Zero(vec.layers * T_eff);
  for (int l = 0; l < vec.layers; ++l)
    for (int t = 0; t < T_eff; ++t) {
      const auto& row = vec.directions[static_cast<size_t>(l)];
      if (t < static_cast<int>(row.size()) && row[static_cast<size_t>(t)].size() > 0) {
        dirs.row(l * T_eff + t) = row[static_cast<size_t>(t)].transpose();
        mask(l * T_eff + t) = 1.0f;
      }
    }
  write_container(dir,
                  {NamedTensor::from_matrix("directions", dirs),
                   NamedTensor::from_vector("mask", mask)},
                  meta);
}

SteeringVector load_steering_vector(const std::filesystem::path& dir, json* meta_out) {
  json meta;
  TensorMap tensors = read_container(dir, &meta);
  SteeringVector vec;
  vec.concept_name = meta.at("concept").get<std::string>();
  vec.method = meta.at("method").get<std::string>() == "caa" ? SteeringVector::Method::CAA
                                                             : SteeringVector::Method::SAE;
  vec.norm_policy = meta.at("norm_policy").get<std::string>() == "renorm"
                        ? SteeringVector::NormPolicy::Renorm
                        : SteeringVector::NormPolicy::PlainAdd;
  vec.layers = meta.at("layers").get<int>();
  vec.timesteps = meta.at("timesteps").get<int>();
  vec.time_averaged = meta.at("time_averaged").get<bool>();
  vec.source_layer = meta.at("source_layer").get<int>();
  vec.alpha_scale = meta.at("alpha_scale").get<double>();
  const Matf dirs = tensors.at("directions").to_matrix();
  const Vecf mask = tensors.at("mask").to_vector();
  const int T_eff = vec.time_averaged ? 1 : vec.timesteps;
  vec.directions.assign(static_cast<size_t>(vec.layers), {});
  for (int l = 0; l < vec.layers; ++l) {
    auto& row = vec.directions[static_cast<size_t>(l)];
    row.assign(static_cast<size_t>(T_eff), Vecf());
    for (int t = 0; t < T_eff; ++t)
      if (mask(l * T_eff + t) > 0.5f) row[static_cast<size_t>(t)] = dirs.row(l * T_eff + t);
  }
  if (meta_out) *meta_out = meta;
  return vec;
}

}  // namespace steerlab::steer
