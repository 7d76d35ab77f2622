#include "steerlab/model.hpp"

#include "steerlab/rng.hpp"
#include "steerlab/tensor_store.hpp"

#include <nlohmann/json.hpp>

#include <cmath>

using nlohmann::json;

namespace steerlab::dit {

void ModelConfig::check_shapes() const {
  if (layers < 1 || dim < 1 || heads < 1 || prompt_dim < 1 || frames < 1 || timesteps < 1)
    throw ConfigError("model dimensions must be positive");
  if (dim % heads != 0) throw ConfigError("model dim must be divisible by heads");
}

void ModelConfig::validate() const {
  check_shapes();
  if (layers < 4) throw ConfigError("config requires at least 4 layers");
  if (timesteps < 10) throw ConfigError("config requires at least 10 timesteps");
}

NoiseSchedule NoiseSchedule::linear(int timesteps, float start, float end) {
  NoiseSchedule s;
  s.alpha_bar.resize(timesteps);
  for (int t = 0; t < timesteps; ++t) {
    const double frac = timesteps == 1 ? 1.0 : static_cast<double>(t) / (timesteps - 1);
    s.alpha_bar(t) = static_cast<float>(start + (end - start) * frac);
  }
  s.sqrt_ab = s.alpha_bar.array().sqrt();
  s.sqrt_one_minus_ab = (1.0f - s.alpha_bar.array()).sqrt();
  s.check();
  return s;
}

void NoiseSchedule::check() const {
  const int T = static_cast<int>(alpha_bar.size());
  if (T < 1) throw ConfigError("empty noise schedule");
  if (alpha_bar(0) < 0.99f) throw ConfigError("alpha_bar[0] must be >= 0.99");
  if (alpha_bar(T - 1) > 0.05f) throw ConfigError("alpha_bar[T-1] must be <= 0.05");
  for (int t = 0; t + 1 < T; ++t)
    if (alpha_bar(t + 1) >= alpha_bar(t)) throw ConfigError("alpha_bar must strictly decrease");
  for (int t = 0; t < T; ++t)
    if (alpha_bar(t) <= 0.0f || alpha_bar(t) > 1.0f)
      throw ConfigError("alpha_bar out of (0, 1]");
}

NoiseSchedule make_schedule(const ModelConfig& config) {
  return NoiseSchedule::linear(config.timesteps);
}

Matf sinusoidal_positions(int frames, int dim) {
  Matf pos(frames, dim);
  for (int f = 0; f < frames; ++f) {
    for (int i = 0; i < dim; i += 2) {
      const double rate = std::pow(10000.0, -static_cast<double>(i) / dim);
      pos(f, i) = static_cast<float>(std::sin(f * rate));
      if (i + 1 < dim) pos(f, i + 1) = static_cast<float>(std::cos(f * rate));
    }
  }
  return pos;
}

namespace {

// Scaled-uniform (Glorot) init; residual-branch output projections get an
// extra damping factor, and cross-attention outputs start near zero so the
// conditioning pathway has to earn its share during training.
constexpr double kResidualScale = 0.3;
constexpr double kCrossOutScale = 0.05;

Matf glorot(int rows, int cols, Rng& rng, double scale = 1.0) {
  const double limit = scale * std::sqrt(6.0 / (rows + cols));
  Matf m(rows, cols);
  fill_uniform(m, rng, -limit, limit);
  return m;
}

}  // namespace

Weights init_weights(const ModelConfig& config, uint64_t seed) {
  config.check_shapes();
  const int d = config.dim, dc = config.prompt_dim, h = config.ffn_hidden();
  Weights w;
  w.config = config;
  Rng rng(seed_mix({seed, 0x11117ull}));
  w.in_w = glorot(d, d, rng);
  w.in_b = Vecf::Zero(d);
  w.time_table.resize(config.timesteps, d);
  fill_normal(w.time_table, rng, 0.02);
  w.blocks.resize(static_cast<size_t>(config.layers));
  for (auto& b : w.blocks) {
    b.ln1_g = Vecf::Ones(d);
    b.ln1_b = Vecf::Zero(d);
    b.ln2_g = Vecf::Ones(d);
    b.ln2_b = Vecf::Zero(d);
    b.ln3_g = Vecf::Ones(d);
    b.ln3_b = Vecf::Zero(d);
    b.sa_wq = glorot(d, d, rng);
    b.sa_wk = glorot(d, d, rng);
    b.sa_wv = glorot(d, d, rng);
    b.sa_wo = glorot(d, d, rng, kResidualScale);
    b.ca_wq = glorot(d, d, rng);
    b.ca_wk = glorot(dc, d, rng);
    b.ca_wv = glorot(dc, d, rng);
    b.ca_wo = glorot(d, d, rng, kCrossOutScale);
    b.ff_w1 = glorot(d, h, rng);
    b.ff_b1 = Vecf::Zero(h);
    b.ff_w2 = glorot(h, d, rng, kResidualScale);
    b.ff_b2 = Vecf::Zero(d);
  }
  w.lnf_g = Vecf::Ones(d);
  w.lnf_b = Vecf::Zero(d);
  w.out_w = glorot(d, d, rng, kResidualScale);
  w.out_b = Vecf::Zero(d);
  w.pos_table = sinusoidal_positions(config.frames, d);
  return w;
}

template <typename S>
std::vector<ParamRef<S>> collect_params(WeightsT<S>& w) {
  std::vector<ParamRef<S>> out;
  auto add_m = [&out](const std::string& name, Mat<S>& m) {
    out.push_back({name, m.data(), m.rows(), m.cols()});
  };
  auto add_v = [&out](const std::string& name, Vec<S>& v) {
    out.push_back({name, v.data(), v.size(), 1});
  };
  add_m("in.w", w.in_w);
  add_v("in.b", w.in_b);
  add_m("time.table", w.time_table);
  for (size_t i = 0; i < w.blocks.size(); ++i) {
    auto& b = w.blocks[i];
    const std::string p = "blk" + std::to_string(i) + ".";
    add_v(p + "ln1.g", b.ln1_g);
    add_v(p + "ln1.b", b.ln1_b);
    add_m(p + "sa.wq", b.sa_wq);
    add_m(p + "sa.wk", b.sa_wk);
    add_m(p + "sa.wv", b.sa_wv);
    add_m(p + "sa.wo", b.sa_wo);
    add_v(p + "ln2.g", b.ln2_g);
    add_v(p + "ln2.b", b.ln2_b);
    add_m(p + "ca.wq", b.ca_wq);
    add_m(p + "ca.wk", b.ca_wk);
    add_m(p + "ca.wv", b.ca_wv);
    add_m(p + "ca.wo", b.ca_wo);
    add_v(p + "ln3.g", b.ln3_g);
    add_v(p + "ln3.b", b.ln3_b);
    add_m(p + "ff.w1", b.ff_w1);
    add_v(p + "ff.b1", b.ff_b1);
    add_m(p + "ff.w2", b.ff_w2);
    add_v(p + "ff.b2", b.ff_b2);
  }
  add_v("lnf.g", w.lnf_g);
  add_v("lnf.b", w.lnf_b);
  add_m("out.w", w.out_w);
  add_v("out.b", w.out_b);
  return out;
}

template <typename S>
WeightsT<S> make_zero_like(const WeightsT<S>& w) {
  WeightsT<S> z = w;
  set_zero(z);
  return z;
}

template <typename S>
void set_zero(WeightsT<S>& w) {
  for (auto& p : collect_params(w)) std::fill(p.data, p.data + p.size(), S(0));
}

template <typename To, typename From>
WeightsT<To> cast_weights(const WeightsT<From>& w) {
  WeightsT<To> out;
  out.config = w.config;
  out.in_w = w.in_w.template cast<To>();
  out.in_b = w.in_b.template cast<To>();
  out.time_table = w.time_table.template cast<To>();
  out.blocks.resize(w.blocks.size());
  for (size_t i = 0; i < w.blocks.size(); ++i) {
    const auto& b = w.blocks[i];
    auto& o = out.blocks[i];
    o.ln1_g = b.ln1_g.template cast<To>();
    o.ln1_b = b.ln1_b.template cast<To>();
    o.ln2_g = b.ln2_g.template cast<To>();
    o.ln2_b = b.ln2_b.template cast<To>();
    o.ln3_g = b.ln3_g.template cast<To>();
    o.ln3_b = b.ln3_b.template cast<To>();
    o.sa_wq = b.sa_wq.template cast<To>();
    o.sa_wk = b.sa_wk.template cast<To>();
    o.sa_wv = b.sa_wv.template cast<To>();
    o.sa_wo = b.sa_wo.template cast<To>();
    o.ca_wq = b.ca_wq.template cast<To>();
    o.ca_wk = b.ca_wk.template cast<To>();
    o.ca_wv = b.ca_wv.template cast<To>();
    o.ca_wo = b.ca_wo.template cast<To>();
    o.ff_w1 = b.ff_w1.template cast<To>();
    o.ff_b1 = b.ff_b1.template cast<To>();
    o.ff_w2 = b.ff_w2.template cast<To>();
    o.ff_b2 = b.ff_b2.template cast<To>();
  }
  out.lnf_g = w.lnf_g.template cast<To>();
  out.lnf_b = w.lnf_b.template cast<To>();
  out.out_w = w.out_w.template cast<To>();
  out.out_b = w.out_b.template cast<To>();
  out.pos_table = w.pos_table.template cast<To>();
  return out;
}

template std::vector<ParamRef<float>> collect_params(WeightsT<float>&);
template std::vector<ParamRef<double>> collect_params(WeightsT<double>&);
template WeightsT<float> make_zero_like(const WeightsT<float>&);
template WeightsT<double> make_zero_like(const WeightsT<double>&);
template void set_zero(WeightsT<float>&);
template void set_zero(WeightsT<double>&);
template WeightsT<double> cast_weights<double, float>(const WeightsT<float>&);
template WeightsT<float> cast_weights<float, double>(const WeightsT<double>&);

void save_checkpoint(const std::filesystem::path& dir, const Weights& w, const json& meta) {
  json full = meta;
  full["model"] = {{"layers", w.config.layers},         {"dim", w.config.dim},
                   {"heads", w.config.heads},           {"prompt_dim", w.config.prompt_dim},
                   {"frames", w.config.frames},         {"timesteps", w.config.timesteps}};
  std::vector<NamedTensor> tensors;
  auto& wm = const_cast<Weights&>(w);
  for (const auto& p : collect_params(wm)) {
    NamedTensor t;
    t.name = p.name;
    t.shape = p.cols == 1 ? std::vector<int64_t>{p.rows} : std::vector<int64_t>{p.rows, p.cols};
    t.data.assign(p.data, p.data + p.size());
    tensors.push_back(std::move(t));
  }
  write_container(dir, tensors, full);
}

Weights load_checkpoint(const std::filesystem::path& dir, json* meta_out) {
  json meta;
  TensorMap tensors = read_container(dir, &meta);
  const auto& m = meta.at("model");
  ModelConfig config{m.at("layers"), m.at("dim"),    m.at("heads"),
                     m.at("prompt_dim"), m.at("frames"), m.at("timesteps")};
  Weights w = init_weights(config, 0);
  for (auto& p : collect_params(w)) {
    auto it = tensors.find(p.name);
    if (it == tensors.end()) throw IntegrityError("checkpoint missing tensor " + p.name);
    if (it->second.count() != p.size())
      throw IntegrityError("checkpoint tensor " + p.name + " has wrong size");
    std::copy(it->second.data.begin(), it->second.data.end(), p.data);
  }
  if (meta_out) *meta_out = meta;
  return w;
}

}  // namespace steerlab::dit
