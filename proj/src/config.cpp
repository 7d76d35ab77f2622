#include "steerlab/config.hpp"

#include <nlohmann/json.hpp>

#include <fstream>

using nlohmann::json;

namespace steerlab {

synth::VocabConfig ExperimentConfig::vocab_config() const {
  synth::VocabConfig vc;
  vc.axes = vocab.axes;
  vc.binaries = vocab.binaries;
  vc.ctx_tokens = vocab.ctx_tokens;
  vc.frames = model.frames;
  vc.channels = model.dim;
  vc.prompt_dim = model.prompt_dim;
  return vc;
}

int ExperimentConfig::tau_for(const std::string& concept_name) const {
  // Axis concepts are named "axis.variant"; overrides match the axis part too.
  auto it = sae.tau_overrides.find(concept_name);
  if (it != sae.tau_overrides.end()) return it->second;
  const auto dot = concept_name.find('.');
  if (dot != std::string::npos) {
    it = sae.tau_overrides.find(concept_name.substr(0, dot));
    if (it != sae.tau_overrides.end()) return it->second;
  }
  return sae.tau_default;
}

void ExperimentConfig::validate() const {
  model.validate();
  if (vocab.axes < 3 || vocab.binaries < 2)
    throw ConfigError("vocabulary requires >= 3 axes and >= 2 binary concepts");
  if (model.frames < 8 || model.dim < 8 || model.prompt_dim < 8)
    throw ConfigError("F, d, d_c must all be >= 8");
  if (train.steps < 0 || train.batch < 1) throw ConfigError("bad training settings");
  if (trace.pairs < 1 || trace.seeds < 1) throw ConfigError("tracing needs pairs, seeds >= 1");
  if (trace.mode != "kv" && trace.mode != "k-only" && trace.mode != "v-only")
    throw ConfigError("trace.mode must be kv | k-only | v-only");
  if (trace.functional_k < 1) throw ConfigError("trace.functional_k must be >= 1");
  if (steer.grid_points < 3 || steer.grid_points % 2 == 0)
    throw ConfigError("steer.grid_points must be odd and >= 3 (the grid must contain 0)");
  if (steer.grid_preset != "auto" && steer.grid_preset != "paper-grid")
    throw ConfigError("steer.grid_preset must be auto | paper-grid");
  if (sae.m < 1 || sae.k < 1 || sae.k > sae.m * model.dim)
    throw ConfigError("need 1 <= sae.k <= sae.m * dim");
  if (sae.stride < 1) throw ConfigError("sae.stride must be >= 1");
}

json ExperimentConfig::to_json() const {
  json j;
  j["version"] = 1;
  j["seed"] = seed;
  j["workers"] = workers;
  j["model"] = {{"layers", model.layers},         {"dim", model.dim},
                {"heads", model.heads},           {"prompt_dim", model.prompt_dim},
                {"frames", model.frames},         {"timesteps", model.timesteps}};
  j["vocab"] = {{"axes", vocab.axes}, {"binaries", vocab.binaries}, {"ctx_tokens", vocab.ctx_tokens}};
  j["train"] = {{"steps", train.steps}, {"batch", train.batch}, {"lr", train.lr},
                {"momentum", train.momentum}};
  j["trace"] = {{"pairs", trace.pairs},   {"seeds", trace.seeds},
                {"delta", trace.delta},   {"mode", trace.mode},
                {"diagnostic", trace.diagnostic}, {"pair_seed", trace.pair_seed},
                {"functional_k", trace.functional_k}};
  j["steer"] = {{"grid_points", steer.grid_points}, {"grid_preset", steer.grid_preset},
                {"pairs", steer.pairs},             {"pair_seeds", steer.pair_seeds},
                {"eval_prompts", steer.eval_prompts}, {"eval_seeds", steer.eval_seeds},
                {"prompt_seed", steer.prompt_seed}, {"time_averaged", steer.time_averaged}};
  j["sae"] = {{"m", sae.m},
              {"k", sae.k},
              {"epochs", sae.epochs},
              {"epsilon", sae.epsilon},
              {"tau_default", sae.tau_default},
              {"tau_overrides", sae.tau_overrides},
              {"stride", sae.stride},
              {"corpus_specs", sae.corpus_specs},
              {"corpus_seeds", sae.corpus_seeds},
              {"lr", sae.lr},
              {"batch", sae.batch}};
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig c;
  c.seed = j.value("seed", c.seed);
  c.workers = j.value("workers", c.workers);
  if (j.contains("model")) {
    const auto& m = j.at("model");
    c.model.layers = m.value("layers", c.model.layers);
    c.model.dim = m.value("dim", c.model.dim);
    c.model.heads = m.value("heads", c.model.heads);
    c.model.prompt_dim = m.value("prompt_dim", c.model.prompt_dim);
    c.model.frames = m.value("frames", c.model.frames);
    c.model.timesteps = m.value("timesteps", c.model.timesteps);
  }
  if (j.contains("vocab")) {
    const auto& v = j.at("vocab");
    c.vocab.axes = v.value("axes", c.vocab.axes);
    c.vocab.binaries = v.value("binaries", c.vocab.binaries);
    c.vocab.ctx_tokens = v.value("ctx_tokens", c.vocab.ctx_tokens);
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    c.train.steps = t.value("steps", c.train.steps);
    c.train.batch = t.value("batch", c.train.batch);
    c.train.lr = t.value("lr", c.train.lr);
    c.train.momentum = t.value("momentum", c.train.momentum);
  }
  if (j.contains("trace")) {
    const auto& t = j.at("trace");
    c.trace.pairs = t.value("pairs", c.trace.pairs);
    c.trace.seeds = t.value("seeds", c.trace.seeds);
    c.trace.delta = t.value("delta", c.trace.delta);
    c.trace.mode = t.value("mode", c.trace.mode);
    c.trace.diagnostic = t.value("diagnostic", c.trace.diagnostic);
    c.trace.pair_seed = t.value("pair_seed", c.trace.pair_seed);
    c.trace.functional_k = t.value("functional_k", c.trace.functional_k);
  }
  if (j.contains("steer")) {
    const auto& s = j.at("steer");
    c.steer.grid_points = s.value("grid_points", c.steer.grid_points);
    c.steer.grid_preset = s.value("grid_preset", c.steer.grid_preset);
    c.steer.pairs = s.value("pairs", c.steer.pairs);
    c.steer.pair_seeds = s.value("pair_seeds", c.steer.pair_seeds);
    c.steer.eval_prompts = s.value("eval_prompts", c.steer.eval_prompts);
    c.steer.eval_seeds = s.value("eval_seeds", c.steer.eval_seeds);
    c.steer.prompt_seed = s.value("prompt_seed", c.steer.prompt_seed);
    c.steer.time_averaged = s.value("time_averaged", c.steer.time_averaged);
  }
  if (j.contains("sae")) {
    const auto& s = j.at("sae");
    c.sae.m = s.value("m", c.sae.m);
    c.sae.k = s.value("k", c.sae.k);
    c.sae.epochs = s.value("epochs", c.sae.epochs);
    c.sae.epsilon = s.value("epsilon", c.sae.epsilon);
    c.sae.tau_default = s.value("tau_default", c.sae.tau_default);
    if (s.contains("tau_overrides"))
      c.sae.tau_overrides = s.at("tau_overrides").get<std::map<std::string, int>>();
    c.sae.stride = s.value("stride", c.sae.stride);
    c.sae.corpus_specs = s.value("corpus_specs", c.sae.corpus_specs);
    c.sae.corpus_seeds = s.value("corpus_seeds", c.sae.corpus_seeds);
    c.sae.lr = s.value("lr", c.sae.lr);
    c.sae.batch = s.value("batch", c.sae.batch);
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open config file " + file.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config parse error: " + std::string(e.what()));
  }
  return from_json(j);
}

void ExperimentConfig::save(const std::filesystem::path& file) const {
  std::ofstream out(file, std::ios::trunc);
  out << to_json().dump(2) << "\n";
}

std::string ExperimentConfig::hash() const {
  const std::string dump = to_json().dump();
  return hex64(fnv1a64(dump));
}

void ExperimentConfig::set_path(const std::string& dotted, const std::string& value) {
  json j = to_json();
  json* node = &j;
  size_t start = 0;
  for (;;) {
    const size_t dot = dotted.find('.', start);
    const std::string key = dotted.substr(start, dot - start);
    if (dot == std::string::npos) {
      if (!node->contains(key)) throw ConfigError("unknown config key: " + dotted);
      json& leaf = (*node)[key];
      json parsed = json::parse(value, nullptr, false);
      if (parsed.is_discarded()) parsed = json(value);  // bare string
      if (leaf.is_string() && !parsed.is_string()) parsed = json(value);
      if (!leaf.is_string() && parsed.is_string())
        throw ConfigError("value for " + dotted + " must be " + std::string(leaf.type_name()));
      leaf = parsed;
      break;
    }
    if (!node->contains(key)) throw ConfigError("unknown config key: " + dotted);
    node = &(*node)[key];
    start = dot + 1;
  }
  *this = from_json(j);
}

}  // namespace steerlab
