#include "steerlab/synth.hpp"

#include "steerlab/rng.hpp"
#include "steerlab/tensor_store.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

using nlohmann::json;

namespace steerlab::synth {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Frame profiles, all unit Euclidean norm over F samples.
Vecf sine_profile(int frames, int freq) {
  Vecf v(frames);
  for (int f = 0; f < frames; ++f)
    v(f) = static_cast<float>(std::sin(2.0 * kPi * freq * f / frames));
  v /= v.norm();
  return v;
}

Vecf cosine_profile(int frames, int freq) {
  Vecf v(frames);
  for (int f = 0; f < frames; ++f)
    v(f) = static_cast<float>(std::cos(2.0 * kPi * freq * f / frames));
  v /= v.norm();
  return v;
}

Vecf constant_profile(int frames) {
  return Vecf::Constant(frames, 1.0f / std::sqrt(static_cast<float>(frames)));
}

Vecf ramp_profile(int frames) {
  Vecf v(frames);
  for (int f = 0; f < frames; ++f)
    v(f) = static_cast<float>(f) - 0.5f * static_cast<float>(frames - 1);
  v /= v.norm();
  return v;
}

// Outer product of a frame profile and a channel profile placed at a channel
// offset, scaled so the nonzero support has unit RMS.
Matf placed_pattern(const Vecf& frame_profile, const Vecf& channel_profile, int channel_offset,
                    int frames, int channels) {
  Matf t = Matf::Zero(frames, channels);
  int support = 0;
  for (int c = 0; c < channel_profile.size(); ++c)
    if (channel_profile(c) != 0.0f) ++support;
  const float scale = std::sqrt(static_cast<float>(frames) * static_cast<float>(support));
  for (int f = 0; f < frames; ++f)
    for (int c = 0; c < channel_profile.size(); ++c)
      t(f, channel_offset + c) = scale * frame_profile(f) * channel_profile(c);
  return t;
}

Vecf group_constant(int width) {
  return Vecf::Constant(width, 1.0f / std::sqrt(static_cast<float>(width)));
}

Vecf rademacher(int width, Rng& rng) {
  Vecf v(width);
  for (int c = 0; c < width; ++c)
    v(c) = (rng.next() & 1) ? 1.0f : -1.0f;
  v /= v.norm();
  return v;
}

int token_count(const VocabConfig& cfg) { return 1 + 2 * cfg.axes + cfg.binaries + 1; }

void check_axis_invariants(const ConceptVocabulary& vocab) {
  // Variant correlation within an axis: <= 0 after mean removal.
  for (const auto& ax : vocab.axes) {
    Matf a = ax.variant_templates[0];
    Matf b = ax.variant_templates[1];
    a.array() -= a.mean();
    b.array() -= b.mean();
    const double corr =
        (a.array() * b.array()).sum() / std::max(1e-20, double(a.norm()) * double(b.norm()));
    if (corr > 1e-6)
      throw CapacityError("axis " + ax.name + " variant templates positively correlated");
  }
  // Cross-axis orthogonality of normalized templates.
  const int n = static_cast<int>(vocab.axes.size());
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      for (int vi = 0; vi < 2; ++vi)
        for (int vj = 0; vj < 2; ++vj) {
          const Matf& a = vocab.axes[i].variant_templates[vi];
          const Matf& b = vocab.axes[j].variant_templates[vj];
          const double ip = std::abs((a.array() * b.array()).sum()) /
                            (double(a.norm()) * double(b.norm()));
          if (ip >= 1e-6)
            throw CapacityError("templates of axes " + vocab.axes[i].name + "/" +
                                vocab.axes[j].name + " not orthogonal");
        }
}

}  // namespace

const Matf& ConceptVocabulary::template_of(const ConceptId& c) const {
  if (c.is_axis) {
    if (c.axis < 0 || c.axis >= static_cast<int>(axes.size()) || c.variant < 0 || c.variant > 1)
      throw VocabularyMismatch("unknown axis variant");
    return axes[c.axis].variant_templates[c.variant];
  }
  if (c.binary < 0 || c.binary >= static_cast<int>(binaries.size()))
    throw VocabularyMismatch("unknown binary concept");
  return binaries[c.binary].pattern;
}

std::string ConceptVocabulary::concept_name(const ConceptId& c) const {
  if (c.is_axis) return axes.at(c.axis).name + "." + axes.at(c.axis).variant_names[c.variant];
  return binaries.at(c.binary).name;
}

ConceptId ConceptVocabulary::parse_concept(const std::string& name) const {
  const auto dot = name.find('.');
  if (dot == std::string::npos) {
    for (int b = 0; b < static_cast<int>(binaries.size()); ++b)
      if (binaries[b].name == name) return ConceptId::binary_concept(b);
    // Bare axis name resolves to its steering variant.
    for (int a = 0; a < static_cast<int>(axes.size()); ++a)
      if (axes[a].name == name) return ConceptId::axis_variant(a, axes[a].steer_variant);
    throw VocabularyMismatch("unknown concept: " + name);
  }
  const std::string axis = name.substr(0, dot), variant = name.substr(dot + 1);
  for (int a = 0; a < static_cast<int>(axes.size()); ++a)
    if (axes[a].name == axis)
      for (int v = 0; v < 2; ++v)
        if (axes[a].variant_names[v] == variant) return ConceptId::axis_variant(a, v);
  throw VocabularyMismatch("unknown concept: " + name);
}

std::vector<ConceptId> ConceptVocabulary::default_concepts() const {
  std::vector<ConceptId> out;
  for (int a = 0; a < static_cast<int>(axes.size()); ++a)
    out.push_back(ConceptId::axis_variant(a, axes[a].steer_variant));
  for (int b = 0; b < static_cast<int>(binaries.size()); ++b)
    out.push_back(ConceptId::binary_concept(b));
  return out;
}

std::vector<ConceptId> ConceptVocabulary::all_probe_concepts() const {
  std::vector<ConceptId> out;
  for (int a = 0; a < static_cast<int>(axes.size()); ++a)
    for (int v = 0; v < 2; ++v) out.push_back(ConceptId::axis_variant(a, v));
  for (int b = 0; b < static_cast<int>(binaries.size()); ++b)
    out.push_back(ConceptId::binary_concept(b));
  return out;
}

std::string PromptSpec::key() const {
  std::ostringstream os;
  os << "s" << style_seed;
  for (const auto& [axis, variant] : assignments) os << "|a" << axis << "=" << variant;
  for (int b : presences) os << "|b" << b;
  return os.str();
}

ConceptVocabulary build_vocabulary(uint64_t seed, const VocabConfig& config) {
  if (config.axes < 3 || config.binaries < 2)
    throw ConfigError("vocabulary requires >= 3 axes and >= 2 binary concepts");
  if (config.frames < 8 || config.channels < 8 || config.prompt_dim < 8)
    throw ConfigError("F, d, d_c must all be >= 8");
  if (config.ctx_tokens < 2) throw ConfigError("ctx_tokens must be >= 2");

  const int F = config.frames, d = config.channels;
  const int style_groups = 2;
  const int groups = config.axes + config.binaries + style_groups;
  const int gw = d / groups;
  if (gw < 2)
    throw CapacityError("channel dimension too small for orthogonal templates: need >= " +
                        std::to_string(2 * groups) + " channels");

  ConceptVocabulary vocab;
  vocab.seed = seed;
  vocab.config = config;

  Rng bank_rng(seed_mix({seed, 0xBA17C0DEull}));

  static const char* kAxisNames[3] = {"tempo", "mood", "vocal_gender"};
  static const char* kVariantNames[3][2] = {{"slow", "fast"}, {"happy", "sad"}, {"female", "male"}};
  static const int kSteerVariant[3] = {1, 0, 0};  // fast, happy, female
  static const char* kInstrumentNames[2] = {"piano", "drums"};

  int next_token = 1;  // token 0 is the background token
  for (int a = 0; a < config.axes; ++a) {
    ConceptAxis ax;
    if (a < 3) {
      ax.name = kAxisNames[a];
      ax.variant_names[0] = kVariantNames[a][0];
      ax.variant_names[1] = kVariantNames[a][1];
      ax.steer_variant = kSteerVariant[a];
    } else {
      ax.name = "axis" + std::to_string(a);
      ax.variant_names[0] = "lo";
      ax.variant_names[1] = "hi";
      ax.steer_variant = 1;
    }
    const int offset = a * gw;
    const int kind = a % 3;
    if (kind == 0) {
      // Sinusoid frequency pair along the frame axis.
      const int shift = a / 3;
      const int slow = 2 + shift, fast = 8 + shift;
      if (2 * fast >= F)
        throw CapacityError("frame count " + std::to_string(F) +
                            " too small for sinusoid frequency " + std::to_string(fast));
      ax.variant_templates[0] = placed_pattern(sine_profile(F, slow), group_constant(gw), offset, F, d);
      ax.variant_templates[1] = placed_pattern(sine_profile(F, fast), group_constant(gw), offset, F, d);
    } else if (kind == 1) {
      // Rising vs decaying envelope ramp.
      Vecf ramp = ramp_profile(F);
      ax.variant_templates[0] = placed_pattern(ramp, group_constant(gw), offset, F, d);
      ax.variant_templates[1] = placed_pattern(Vecf(-ramp), group_constant(gw), offset, F, d);
    } else {
      // Energy in the upper vs lower half of the axis' channel band.
      const int half = gw / 2;
      ax.variant_templates[0] =
          placed_pattern(constant_profile(F), group_constant(gw - half), offset + half, F, d);
      ax.variant_templates[1] =
          placed_pattern(constant_profile(F), group_constant(half), offset, F, d);
    }
    ax.variant_tokens[0] = next_token++;
    ax.variant_tokens[1] = next_token++;
    vocab.axes.push_back(std::move(ax));
  }

  for (int b = 0; b < config.binaries; ++b) {
    BinaryConcept bin;
    const int offset = (config.axes + b) * gw;
    const bool genre_slot = (config.binaries >= 3 && b == config.binaries - 1);
    if (genre_slot) {
      // Genre analogue: fixed combination of two instrument-style bank
      // patterns reserved for it (keeps it orthogonal to the real instruments).
      bin.name = "jazz";
      const int half = gw / 2;
      Matf bank_a = placed_pattern(constant_profile(F), rademacher(half, bank_rng), offset, F, d);
      Matf bank_b =
          placed_pattern(constant_profile(F), rademacher(gw - half, bank_rng), offset + half, F, d);
      bin.pattern = (bank_a + bank_b) / std::sqrt(2.0f);
    } else {
      bin.name = b < 2 ? kInstrumentNames[b] : "inst" + std::to_string(b);
      bin.pattern = placed_pattern(constant_profile(F), rademacher(gw, bank_rng), offset, F, d);
    }
    bin.token = next_token++;
    vocab.binaries.push_back(std::move(bin));
  }

  // Style subspace: per style group, a fixed list of Fourier frame modes.
  const int style_offset = (config.axes + config.binaries) * gw;
  const int style_width = d - style_offset;  // remaining channels, >= 2*gw
  const int per_group = style_width / style_groups;
  std::vector<Vecf> modes;
  modes.push_back(constant_profile(F));
  for (int k = 1; k <= 4 && static_cast<int>(modes.size()) < 8; ++k) {
    if (2 * k < F) {
      modes.push_back(sine_profile(F, k));
      if (static_cast<int>(modes.size()) < 8) modes.push_back(cosine_profile(F, k));
    }
  }
  for (int g = 0; g < style_groups; ++g) {
    const int off = style_offset + g * per_group;
    const int width = (g == style_groups - 1) ? (d - off) : per_group;
    for (const auto& mode : modes) {
      Matf basis = placed_pattern(mode, group_constant(width), off, F, d);
      basis /= basis.norm();  // orthonormal basis, not amplitude-scaled
      vocab.style_basis.push_back(std::move(basis));
    }
  }
  // Coefficient scale for unit per-entry variance on the style support.
  vocab.style_coeff_sigma =
      std::sqrt(static_cast<double>(F) * per_group / static_cast<double>(modes.size()));

  // Embedding table: seeded unit-sphere rows.
  const int tokens = token_count(config);
  vocab.background_token = 0;
  vocab.pad_token = tokens - 1;
  vocab.embedding_table.resize(tokens, config.prompt_dim);
  Rng emb_rng(seed_mix({seed, 0xE4BEDull}));
  for (int t = 0; t < tokens; ++t) {
    Vecf row(config.prompt_dim);
    for (int i = 0; i < config.prompt_dim; ++i) row(i) = static_cast<float>(emb_rng.normal());
    row /= row.norm();
    vocab.embedding_table.row(t) = row.transpose();
  }

  check_axis_invariants(vocab);
  return vocab;
}

void validate_spec(const ConceptVocabulary& vocab, const PromptSpec& spec) {
  for (const auto& [axis, variant] : spec.assignments) {
    if (axis < 0 || axis >= static_cast<int>(vocab.axes.size()))
      throw VocabularyMismatch("spec references unknown axis " + std::to_string(axis));
    if (variant < 0 || variant > 1)
      throw VocabularyMismatch("spec references unknown variant " + std::to_string(variant));
  }
  for (int b : spec.presences)
    if (b < 0 || b >= static_cast<int>(vocab.binaries.size()))
      throw VocabularyMismatch("spec references unknown binary concept " + std::to_string(b));
}

Latent render_background(const ConceptVocabulary& vocab, uint32_t style_seed, uint64_t seed) {
  Rng rng(seed_mix({vocab.seed, 0xBA5Eull, style_seed, seed}));
  Latent bg = Latent::Zero(vocab.config.frames, vocab.config.channels);
  for (const auto& basis : vocab.style_basis)
    bg += static_cast<float>(rng.normal() * vocab.style_coeff_sigma) * basis;
  return bg;
}

Latent render_clean_latent(const ConceptVocabulary& vocab, const PromptSpec& spec, uint64_t seed) {
  validate_spec(vocab, spec);
  Latent z = render_background(vocab, spec.style_seed, seed);
  for (const auto& [axis, variant] : spec.assignments)
    z += vocab.axes[axis].variant_templates[variant];
  for (int b : spec.presences) z += vocab.binaries[b].pattern;
  return z;
}

PromptEmbedding embed_prompt(const ConceptVocabulary& vocab, const PromptSpec& spec) {
  validate_spec(vocab, spec);
  const int C = vocab.config.ctx_tokens;
  const int used = 1 + static_cast<int>(spec.assignments.size() + spec.presences.size());
  if (used > C)
    throw CapacityError("prompt needs " + std::to_string(used) + " tokens but C = " +
                        std::to_string(C));
  PromptEmbedding emb(C, vocab.config.prompt_dim);
  int row = 0;
  emb.row(row++) = vocab.embedding_table.row(vocab.background_token);
  for (const auto& [axis, variant] : spec.assignments)
    emb.row(row++) = vocab.embedding_table.row(vocab.axes[axis].variant_tokens[variant]);
  for (int b : spec.presences)
    emb.row(row++) = vocab.embedding_table.row(vocab.binaries[b].token);
  while (row < C) emb.row(row++) = vocab.embedding_table.row(vocab.pad_token);
  return emb;
}

namespace {

PromptSpec draw_spec(const ConceptVocabulary& vocab, Rng& rng) {
  PromptSpec spec;
  for (int a = 0; a < static_cast<int>(vocab.axes.size()); ++a) {
    const uint64_t roll = rng.below(4);
    if (roll != 0) spec.assignments[a] = static_cast<int>(rng.below(2));
  }
  for (int b = 0; b < static_cast<int>(vocab.binaries.size()); ++b)
    if (rng.below(3) == 0) spec.presences.insert(b);
  spec.style_seed = static_cast<uint32_t>(rng.next());
  return spec;
}

void cap_concept_count(const ConceptVocabulary& vocab, PromptSpec& spec) {
  // Keep within the C-1 concept slots by dropping binaries, then assignments.
  const size_t limit = static_cast<size_t>(vocab.config.ctx_tokens) - 1;
  while (spec.assignments.size() + spec.presences.size() > limit) {
    if (!spec.presences.empty())
      spec.presences.erase(std::prev(spec.presences.end()));
    else
      spec.assignments.erase(std::prev(spec.assignments.end()));
  }
}

}  // namespace

std::vector<std::pair<PromptSpec, PromptSpec>> make_counterfactual_pairs(
    const ConceptVocabulary& vocab, const ConceptId& concept_id, int n, uint64_t seed) {
  require(n >= 1, "need n >= 1 pairs");
  (void)vocab.template_of(concept_id);  // vocabulary-mismatch check
  std::vector<std::pair<PromptSpec, PromptSpec>> pairs;
  std::set<std::string> seen;
  int attempt = 0;
  while (static_cast<int>(pairs.size()) < n) {
    if (++attempt > 1000 * n) throw ContractViolation("cannot draw enough distinct pairs");
    // Content is drawn independently of the concept's direction so that
    // swapping variants yields the mirrored pair set.
    Rng rng(seed_mix({vocab.seed, 0xC0DEull, seed, static_cast<uint64_t>(attempt)}));
    PromptSpec base = draw_spec(vocab, rng);
    if (concept_id.is_axis)
      base.assignments.erase(concept_id.axis);
    else
      base.presences.erase(concept_id.binary);
    // Reserve one slot so adding the concept cannot push either side over
    // capacity; the pair then differs in the named concept only.
    const size_t limit = static_cast<size_t>(vocab.config.ctx_tokens) - 1;
    while (base.assignments.size() + base.presences.size() + 1 > limit) {
      if (!base.presences.empty())
        base.presences.erase(std::prev(base.presences.end()));
      else
        base.assignments.erase(std::prev(base.assignments.end()));
    }
    PromptSpec with = base, without = base;
    if (concept_id.is_axis) {
      with.assignments[concept_id.axis] = concept_id.variant;
      without.assignments[concept_id.axis] = 1 - concept_id.variant;
    } else {
      with.presences.insert(concept_id.binary);
    }
    const std::string key = with.key() + "//" + without.key();
    if (!seen.insert(key).second) continue;
    pairs.emplace_back(std::move(with), std::move(without));
  }
  return pairs;
}

std::vector<PromptSpec> neutral_specs(const ConceptVocabulary& vocab, const ConceptId& concept_id,
                                      int n, uint64_t seed) {
  std::vector<PromptSpec> out;
  std::set<std::string> seen;
  int attempt = 0;
  while (static_cast<int>(out.size()) < n) {
    if (++attempt > 1000 * n) throw ContractViolation("cannot draw enough distinct specs");
    Rng rng(seed_mix({vocab.seed, 0x5EEDull, seed, static_cast<uint64_t>(attempt)}));
    PromptSpec spec = draw_spec(vocab, rng);
    if (concept_id.is_axis)
      spec.assignments.erase(concept_id.axis);
    else
      spec.presences.erase(concept_id.binary);
    cap_concept_count(vocab, spec);
    if (!seen.insert(spec.key()).second) continue;
    out.push_back(std::move(spec));
  }
  return out;
}

std::vector<PromptSpec> random_specs(const ConceptVocabulary& vocab, int n, uint64_t seed) {
  std::vector<PromptSpec> out;
  out.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    Rng rng(seed_mix({vocab.seed, 0xD1CEull, seed, static_cast<uint64_t>(i)}));
    PromptSpec spec = draw_spec(vocab, rng);
    cap_concept_count(vocab, spec);
    out.push_back(std::move(spec));
  }
  return out;
}

json spec_to_json(const PromptSpec& spec) {
  json j;
  j["style_seed"] = spec.style_seed;
  json a = json::object();
  for (const auto& [axis, variant] : spec.assignments) a[std::to_string(axis)] = variant;
  j["assignments"] = a;
  j["presences"] = spec.presences;
  return j;
}

PromptSpec spec_from_json(const json& j) {
  PromptSpec spec;
  spec.style_seed = j.at("style_seed").get<uint32_t>();
  for (const auto& [k, v] : j.at("assignments").items())
    spec.assignments[std::stoi(k)] = v.get<int>();
  for (const auto& b : j.at("presences")) spec.presences.insert(b.get<int>());
  return spec;
}

void save_vocabulary(const std::filesystem::path& dir, const ConceptVocabulary& vocab) {
  json meta;
  meta["version"] = 1;
  meta["seed"] = vocab.seed;
  meta["config"] = {{"axes", vocab.config.axes},        {"binaries", vocab.config.binaries},
                    {"frames", vocab.config.frames},    {"channels", vocab.config.channels},
                    {"prompt_dim", vocab.config.prompt_dim}, {"ctx_tokens", vocab.config.ctx_tokens}};
  json axes = json::array();
  for (const auto& ax : vocab.axes) {
    axes.push_back({{"name", ax.name},
                    {"variants", {ax.variant_names[0], ax.variant_names[1]}},
                    {"tokens", {ax.variant_tokens[0], ax.variant_tokens[1]}},
                    {"steer_variant", ax.steer_variant}});
  }
  meta["axes"] = axes;
  json bins = json::array();
  for (const auto& b : vocab.binaries) bins.push_back({{"name", b.name}, {"token", b.token}});
  meta["binaries"] = bins;
  meta["style_coeff_sigma"] = vocab.style_coeff_sigma;
  meta["background_token"] = vocab.background_token;
  meta["pad_token"] = vocab.pad_token;

  std::vector<NamedTensor> tensors;
  for (size_t a = 0; a < vocab.axes.size(); ++a)
    for (int v = 0; v < 2; ++v)
      tensors.push_back(NamedTensor::from_matrix(
          "axis" + std::to_string(a) + ".variant" + std::to_string(v),
          vocab.axes[a].variant_templates[v]));
  for (size_t b = 0; b < vocab.binaries.size(); ++b)
    tensors.push_back(
        NamedTensor::from_matrix("binary" + std::to_string(b), vocab.binaries[b].pattern));
  for (size_t s = 0; s < vocab.style_basis.size(); ++s)
    tensors.push_back(NamedTensor::from_matrix("style" + std::to_string(s), vocab.style_basis[s]));
  tensors.push_back(NamedTensor::from_matrix("embedding_table", vocab.embedding_table));
  write_container(dir, tensors, meta);
}

ConceptVocabulary load_vocabulary(const std::filesystem::path& dir) {
  json meta;
  TensorMap tensors = read_container(dir, &meta);
  ConceptVocabulary vocab;
  vocab.seed = meta.at("seed").get<uint64_t>();
  const auto& c = meta.at("config");
  vocab.config = {c.at("axes"),     c.at("binaries"),   c.at("frames"),
                  c.at("channels"), c.at("prompt_dim"), c.at("ctx_tokens")};
  vocab.style_coeff_sigma = meta.at("style_coeff_sigma").get<double>();
  vocab.background_token = meta.at("background_token").get<int>();
  vocab.pad_token = meta.at("pad_token").get<int>();
  int a = 0;
  for (const auto& axj : meta.at("axes")) {
    ConceptAxis ax;
    ax.name = axj.at("name").get<std::string>();
    ax.variant_names[0] = axj.at("variants")[0].get<std::string>();
    ax.variant_names[1] = axj.at("variants")[1].get<std::string>();
    ax.variant_tokens[0] = axj.at("tokens")[0].get<int>();
    ax.variant_tokens[1] = axj.at("tokens")[1].get<int>();
    ax.steer_variant = axj.at("steer_variant").get<int>();
    ax.variant_templates[0] = tensors.at("axis" + std::to_string(a) + ".variant0").to_matrix();
    ax.variant_templates[1] = tensors.at("axis" + std::to_string(a) + ".variant1").to_matrix();
    vocab.axes.push_back(std::move(ax));
    ++a;
  }
  int b = 0;
  for (const auto& bj : meta.at("binaries")) {
    BinaryConcept bin;
    bin.name = bj.at("name").get<std::string>();
    bin.token = bj.at("token").get<int>();
    bin.pattern = tensors.at("binary" + std::to_string(b)).to_matrix();
    vocab.binaries.push_back(std::move(bin));
    ++b;
  }
  for (size_t s = 0;; ++s) {
    auto it = tensors.find("style" + std::to_string(s));
    if (it == tensors.end()) break;
    vocab.style_basis.push_back(it->second.to_matrix());
  }
  vocab.embedding_table = tensors.at("embedding_table").to_matrix();
  return vocab;
}

void save_pair_set(const std::filesystem::path& file,
                   const std::vector<std::pair<PromptSpec, PromptSpec>>& pairs,
                   const std::string& concept_name, uint64_t seed) {
  json j;
  j["version"] = 1;
  j["concept"] = concept_name;
  j["seed"] = seed;
  json list = json::array();
  for (const auto& [pc, pcf] : pairs)
    list.push_back({{"with", spec_to_json(pc)}, {"without", spec_to_json(pcf)}});
  j["pairs"] = list;
  std::ofstream out(file, std::ios::trunc);
  out << j.dump(2) << "\n";
}

std::vector<std::pair<PromptSpec, PromptSpec>> load_pair_set(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw MissingArtifact("no pair set at " + file.string());
  json j = json::parse(in);
  std::vector<std::pair<PromptSpec, PromptSpec>> pairs;
  for (const auto& p : j.at("pairs"))
    pairs.emplace_back(spec_from_json(p.at("with")), spec_from_json(p.at("without")));
  return pairs;
}

}  // namespace steerlab::synth
