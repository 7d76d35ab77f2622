#include "steerlab/patching.hpp"

#include "steerlab/parallel.hpp"
#include "steerlab/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

using nlohmann::json;

namespace steerlab::patch {

bool KVCache::complete() const {
  if (static_cast<int>(present.size()) != layers * timesteps) return false;
  return std::all_of(present.begin(), present.end(), [](uint8_t b) { return b != 0; });
}

const KVEntry& KVCache::at(int layer, int t) const {
  const int idx = layer * timesteps + t;
  if (layer < 0 || layer >= layers || t < 0 || t >= timesteps || !present[static_cast<size_t>(idx)])
    throw IntegrityError("cache entry missing for layer " + std::to_string(layer) +
                         ", timestep " + std::to_string(t));
  return entries[static_cast<size_t>(idx)];
}

KVEntry& KVCache::slot(int layer, int t) {
  return entries[static_cast<size_t>(layer * timesteps + t)];
}

RecordResult record_kv(const dit::Weights& w, const synth::ConceptVocabulary& vocab,
                       const synth::PromptSpec& spec, uint64_t seed) {
  RecordResult out;
  out.cache.layers = w.config.layers;
  out.cache.timesteps = w.config.timesteps;
  out.cache.entries.resize(static_cast<size_t>(w.config.layers * w.config.timesteps));
  out.cache.present.assign(out.cache.entries.size(), 0);
  out.cache.prompt_key = spec.key();
  out.cache.seed = seed;

  const Matf c_emb = synth::embed_prompt(vocab, spec);
  dit::HookSet hooks;
  hooks.recorder = [&out](int layer, int t, const Matf& k, const Matf& v, const Matf&) {
    auto& slot = out.cache.slot(layer, t);
    slot.k = k;
    slot.v = v;
    out.cache.present[static_cast<size_t>(layer * out.cache.timesteps + t)] = 1;
  };
  out.generation = dit::sample(w, c_emb, seed, &hooks);
  if (!out.cache.complete())
    throw IntegrityError("recorded cache incomplete: hook did not fire for every (layer, timestep)");
  return out;
}

Latent patched_sample(const dit::Weights& w, const synth::ConceptVocabulary& vocab,
                      const synth::PromptSpec& source_spec, const KVCache& cache,
                      const std::set<int>& layer_set, uint64_t seed, const PatchOptions& opts) {
  if (!cache.complete()) throw IntegrityError("cache incomplete");
  if (cache.layers != w.config.layers || cache.timesteps != w.config.timesteps)
    throw IntegrityError("cache shape does not match model config");
  for (int l : layer_set)
    if (l < 0 || l >= w.config.layers)
      throw ContractViolation("layer index " + std::to_string(l) + " out of range");
  if (!opts.allow_seed_mismatch && seed != cache.seed)
    throw IntegrityError("seed does not match the cache seed (pass allow_seed_mismatch to override)");

  const Matf c_emb = synth::embed_prompt(vocab, source_spec);
  dit::HookSet hooks;
  const PatchMode mode = opts.mode;
  hooks.kv_interceptor = [&cache, &layer_set, mode](int layer, int t, Matf& k, Matf& v) {
    if (layer_set.count(layer) == 0) return;
    const KVEntry& e = cache.at(layer, t);
    if (e.k.rows() != k.rows() || e.k.cols() != k.cols())
      throw IntegrityError("cached K/V shape does not match model");
    if (mode != PatchMode::VOnly) k = e.k;
    if (mode != PatchMode::KOnly) v = e.v;
  };
  return dit::sample(w, c_emb, seed, &hooks);
}

ImpactSample impact(const dit::Weights& w, const synth::ConceptVocabulary& vocab,
                    const std::pair<synth::PromptSpec, synth::PromptSpec>& pair, int layer,
                    const ProbeFn& probe, uint64_t seed, double delta,
                    const PatchOptions& opts) {
  RecordResult target = record_kv(w, vocab, pair.first, seed);
  Latent source_gen = dit::sample(w, synth::embed_prompt(vocab, pair.second), seed);
  Latent patched = patched_sample(w, vocab, pair.second, target.cache, {layer}, seed, opts);
  ImpactSample s;
  s.sim_target = probe(target.generation);
  s.sim_source = probe(source_gen);
  s.sim_patched = probe(patched);
  const double denom = s.sim_target - s.sim_source;
  if (std::abs(denom) >= delta) s.value = (s.sim_patched - s.sim_source) / denom;
  return s;
}

namespace {

// Per-(concept, pair, seed) work item: one target recording, one source run,
// then a patched run per layer. Shares the target/source sims across layers.
struct CellSamples {
  std::vector<std::optional<double>> per_layer;  // impact value or absent
  std::optional<double> full_set;                // diagnostic all-layers pseudo-cell
  bool degenerate = false;
};

}  // namespace

ImpactMatrix impact_matrix(const dit::Weights& w, const synth::ConceptVocabulary& vocab,
                           const std::vector<synth::ConceptId>& concepts,
                           const ProbeFactory& probe_for, const ImpactOptions& opts) {
  const int L = w.config.layers;
  ImpactMatrix m;
  m.pairs_per_concept = opts.pairs_per_concept;
  m.seeds_per_prompt = opts.seeds_per_prompt;
  m.delta = opts.delta;
  m.pair_seed = opts.pair_seed;
  m.cells.assign(static_cast<size_t>(L), std::vector<ImpactCell>(concepts.size()));
  m.full_set_diagnostic.assign(concepts.size(), ImpactCell{});

  std::set<int> all_layers;
  for (int l = 0; l < L; ++l) all_layers.insert(l);

  for (size_t ci = 0; ci < concepts.size(); ++ci) {
    const auto& concept_id = concepts[ci];
    m.concepts.push_back(vocab.concept_name(concept_id));
    const ProbeFn probe = probe_for(concept_id);
    const auto pairs =
        synth::make_counterfactual_pairs(vocab, concept_id, opts.pairs_per_concept, opts.pair_seed);

    const int n_items = opts.pairs_per_concept * opts.seeds_per_prompt;
    std::vector<CellSamples> samples(static_cast<size_t>(n_items));
    parallel_for(n_items, opts.workers, [&](int item) {
      const int pi = item / opts.seeds_per_prompt;
      const int si = item % opts.seeds_per_prompt;
      const uint64_t seed =
          seed_mix({vocab.seed, 0x9A7Cull, opts.pair_seed, static_cast<uint64_t>(pi),
                    static_cast<uint64_t>(si)});
      const auto& pair = pairs[static_cast<size_t>(pi)];
      RecordResult target = record_kv(w, vocab, pair.first, seed);
      Latent source_gen = dit::sample(w, synth::embed_prompt(vocab, pair.second), seed);
      const double sim_target = probe(target.generation);
      const double sim_source = probe(source_gen);
      const double denom = sim_target - sim_source;
      CellSamples& out = samples[static_cast<size_t>(item)];
      out.per_layer.assign(static_cast<size_t>(L), std::nullopt);
      if (std::abs(denom) < opts.delta) {
        out.degenerate = true;
        return;
      }
      PatchOptions popts;
      popts.mode = opts.mode;
      for (int l = 0; l < L; ++l) {
        Latent patched = patched_sample(w, vocab, pair.second, target.cache, {l}, seed, popts);
        out.per_layer[static_cast<size_t>(l)] = (probe(patched) - sim_source) / denom;
      }
      if (opts.diagnostic_full_set) {
        Latent patched =
            patched_sample(w, vocab, pair.second, target.cache, all_layers, seed, popts);
        out.full_set = (probe(patched) - sim_source) / denom;
      }
    });

    // Aggregate in item order.
    for (int item = 0; item < n_items; ++item) {
      const CellSamples& s = samples[static_cast<size_t>(item)];
      for (int l = 0; l < L; ++l) {
        ImpactCell& cell = m.cells[static_cast<size_t>(l)][ci];
        if (s.degenerate) {
          ++cell.excluded;
        } else if (s.per_layer[static_cast<size_t>(l)]) {
          cell.mean += *s.per_layer[static_cast<size_t>(l)];
          ++cell.count;
        }
      }
      ImpactCell& diag = m.full_set_diagnostic[ci];
      if (s.degenerate)
        ++diag.excluded;
      else if (s.full_set) {
        diag.mean += *s.full_set;
        ++diag.count;
      }
    }
    for (int l = 0; l < L; ++l) {
      ImpactCell& cell = m.cells[static_cast<size_t>(l)][ci];
      if (cell.count > 0) cell.mean /= cell.count;
    }
    if (m.full_set_diagnostic[ci].count > 0)
      m.full_set_diagnostic[ci].mean /= m.full_set_diagnostic[ci].count;
  }
  return m;
}

std::vector<int> select_functional_layers(const ImpactMatrix& matrix,
                                          const SelectionPolicy& policy) {
  const int L = matrix.layer_count();
  bool any_valid_column = false;
  for (size_t ci = 0; ci < matrix.concepts.size() && !any_valid_column; ++ci)
    for (int l = 0; l < L; ++l)
      if (matrix.cells[static_cast<size_t>(l)][ci].valid()) {
        any_valid_column = true;
        break;
      }
  if (L == 0 || !any_valid_column)
    throw ContractViolation("impact matrix has no valid concept column");

  std::vector<double> layer_mean(static_cast<size_t>(L), 0.0);
  for (int l = 0; l < L; ++l) {
    double sum = 0.0;
    int n = 0;
    for (const auto& cell : matrix.cells[static_cast<size_t>(l)])
      if (cell.valid()) {
        sum += cell.mean;
        ++n;
      }
    layer_mean[static_cast<size_t>(l)] = n > 0 ? sum / n : -std::numeric_limits<double>::infinity();
  }

  std::vector<int> order(static_cast<size_t>(L));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (layer_mean[static_cast<size_t>(a)] != layer_mean[static_cast<size_t>(b)])
      return layer_mean[static_cast<size_t>(a)] > layer_mean[static_cast<size_t>(b)];
    return a < b;
  });

  std::vector<int> selected;
  if (policy.kind == SelectionPolicy::TopK) {
    const int k = std::min(policy.k, L);
    selected.assign(order.begin(), order.begin() + k);
  } else {
    const double max_mean = layer_mean[static_cast<size_t>(order.front())];
    for (int l = 0; l < L; ++l)
      if (layer_mean[static_cast<size_t>(l)] >= policy.fraction * max_mean)
        selected.push_back(l);
  }
  std::sort(selected.begin(), selected.end());
  return selected;
}

std::string impact_to_csv(const ImpactMatrix& m) {
  std::ostringstream os;
  os << "layer";
  for (const auto& c : m.concepts) os << "," << c;
  os << "\n";
  for (int l = 0; l < m.layer_count(); ++l) {
    os << l;
    for (const auto& cell : m.cells[static_cast<size_t>(l)]) {
      os << ",";
      if (cell.valid()) os << fmt_float(cell.mean);
    }
    os << "\n";
  }
  bool any_diag = false;
  for (const auto& cell : m.full_set_diagnostic) any_diag = any_diag || cell.valid();
  if (any_diag) {
    os << "all";
    for (const auto& cell : m.full_set_diagnostic) {
      os << ",";
      if (cell.valid()) os << fmt_float(cell.mean);
    }
    os << "\n";
  }
  return os.str();
}

json impact_to_json(const ImpactMatrix& m) {
  json j;
  j["concepts"] = m.concepts;
  j["pairs_per_concept"] = m.pairs_per_concept;
  j["seeds_per_prompt"] = m.seeds_per_prompt;
  j["delta"] = m.delta;
  j["pair_seed"] = m.pair_seed;
  json layers = json::array();
  for (int l = 0; l < m.layer_count(); ++l) {
    json row = json::array();
    for (const auto& cell : m.cells[static_cast<size_t>(l)]) {
      json c;
      c["value"] = cell.valid() ? json(cell.mean) : json(nullptr);
      c["count"] = cell.count;
      c["excluded"] = cell.excluded;
      row.push_back(c);
    }
    layers.push_back(row);
  }
  j["layers"] = layers;
  json diag = json::array();
  for (const auto& cell : m.full_set_diagnostic) {
    json c;
    c["value"] = cell.valid() ? json(cell.mean) : json(nullptr);
    c["count"] = cell.count;
    c["excluded"] = cell.excluded;
    diag.push_back(c);
  }
  j["full_set_diagnostic"] = diag;
  return j;
}

}  // namespace steerlab::patch
