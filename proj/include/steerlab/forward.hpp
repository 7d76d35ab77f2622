#pragma once

#include "steerlab/model.hpp"

#include <cmath>
#include <functional>
#include <string>
#include <type_traits>
#include <vector>

namespace steerlab::dit {

// Interception points around each cross-attention block. Callbacks mutate in
// place and must preserve shapes; leaving arguments untouched reproduces the
// hook-free generation bit-exactly.
struct HookSet {
  // (layer, timestep, K, V); K/V of shape C x d with head-major columns.
  std::function<void(int, int, Matf&, Matf&)> kv_interceptor;
  // (layer, timestep, cross-attention output) before the residual addition.
  std::function<void(int, int, Matf&)> output_interceptor;
  // Observes the values that actually flowed: (layer, timestep, K, V, output).
  std::function<void(int, int, const Matf&, const Matf&, const Matf&)> recorder;
};

template <typename S>
struct BlockTrace {
  Mat<S> xhat1, t1;
  Vec<S> inv1;
  Mat<S> q, k, v, probs, ctx;
  Mat<S> xhat2, t2;
  Vec<S> inv2;
  Mat<S> qc, kc, vc, probs_c, ctx_c;
  Mat<S> xhat3, t3;
  Vec<S> inv3;
  Mat<S> ffn_pre, ffn_act;
  Mat<S> block_in;  // hidden state entering the block (for locality checks)
};

template <typename S>
struct ForwardTrace {
  Mat<S> input;  // z passed to the input projection
  std::vector<BlockTrace<S>> blocks;
  Mat<S> xhatf, tf;
  Vec<S> invf;
  int t = 0;
};

namespace detail {

constexpr double kLnEps = 1e-5;
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

template <typename S>
void layer_norm(const Mat<S>& x, const Vec<S>& g, const Vec<S>& b, Mat<S>& y, Mat<S>& xhat,
                Vec<S>& inv) {
  const auto rows = x.rows(), cols = x.cols();
  y.resize(rows, cols);
  xhat.resize(rows, cols);
  inv.resize(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const S mean = x.row(r).mean();
    const S var = (x.row(r).array() - mean).square().mean();
    const S is = S(1) / std::sqrt(var + S(kLnEps));
    inv(r) = is;
    xhat.row(r) = (x.row(r).array() - mean) * is;
    y.row(r) = xhat.row(r).array() * g.transpose().array() + b.transpose().array();
  }
}

// Accumulates dg/db; returns gradient w.r.t. the layer-norm input.
template <typename S>
Mat<S> layer_norm_backward(const Mat<S>& dy, const Mat<S>& xhat, const Vec<S>& inv,
                           const Vec<S>& g, Vec<S>& dg, Vec<S>& db) {
  const auto rows = dy.rows(), cols = dy.cols();
  Mat<S> dx(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    dg.array() += (dy.row(r).array() * xhat.row(r).array()).transpose();
    db.array() += dy.row(r).transpose().array();
    Eigen::Array<S, 1, Eigen::Dynamic> dxhat = dy.row(r).array() * g.transpose().array();
    const S m1 = dxhat.mean();
    const S m2 = (dxhat * xhat.row(r).array()).mean();
    dx.row(r) = ((dxhat - m1) - xhat.row(r).array() * m2) * inv(r);
  }
  return dx;
}

template <typename S>
void softmax_rows(Mat<S>& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const S mx = m.row(r).maxCoeff();
    m.row(r) = (m.row(r).array() - mx).exp();
    m.row(r) /= m.row(r).sum();
  }
}

// ds from dp given p = softmax(s), row-wise.
template <typename S>
Mat<S> softmax_backward(const Mat<S>& p, const Mat<S>& dp) {
  Mat<S> ds(p.rows(), p.cols());
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    const S dot = p.row(r).dot(dp.row(r));
    ds.row(r) = p.row(r).array() * (dp.row(r).array() - dot);
  }
  return ds;
}

template <typename S>
S gelu(S u) {
  const S g = S(kGeluC) * (u + S(0.044715) * u * u * u);
  return S(0.5) * u * (S(1) + std::tanh(g));
}

template <typename S>
S gelu_grad(S u) {
  const S g = S(kGeluC) * (u + S(0.044715) * u * u * u);
  const S th = std::tanh(g);
  const S sech2 = S(1) - th * th;
  return S(0.5) * (S(1) + th) +
         S(0.5) * u * sech2 * S(kGeluC) * (S(1) + S(3) * S(0.044715) * u * u);
}

// Multi-head attention with externally supplied keys/values:
// out = concat_i softmax(Q_i K_i^T / sqrt(dk)) V_i, times wo.
template <typename S>
Mat<S> attention_core(const Mat<S>& x, const Mat<S>& keys, const Mat<S>& values,
                      const Mat<S>& wq, const Mat<S>& wo, int heads, Mat<S>* q_out,
                      Mat<S>* probs_out, Mat<S>* ctx_out) {
  const int rows = static_cast<int>(x.rows());
  const int d = static_cast<int>(wq.cols());
  const int n = static_cast<int>(keys.rows());
  const int dk = d / heads;
  const S scale = S(1) / std::sqrt(static_cast<S>(dk));
  Mat<S> q = x * wq;
  Mat<S> probs(rows, heads * n), ctx(rows, d);
  for (int i = 0; i < heads; ++i) {
    Mat<S> s = (q.middleCols(i * dk, dk) * keys.middleCols(i * dk, dk).transpose()) * scale;
    softmax_rows(s);
    ctx.middleCols(i * dk, dk).noalias() = s * values.middleCols(i * dk, dk);
    probs.middleCols(i * n, n) = s;
  }
  Mat<S> out = ctx * wo;
  if (q_out) *q_out = std::move(q);
  if (probs_out) *probs_out = std::move(probs);
  if (ctx_out) *ctx_out = std::move(ctx);
  return out;
}

// Backward through attention_core. Returns dx; accumulates dwq/dwo and the
// gradients w.r.t. keys/values.
template <typename S>
Mat<S> attention_core_backward(const Mat<S>& dout, const Mat<S>& x, const Mat<S>& keys,
                               const Mat<S>& values, const Mat<S>& wq, const Mat<S>& wo,
                               int heads, const Mat<S>& q, const Mat<S>& probs,
                               const Mat<S>& ctx, Mat<S>& dwq, Mat<S>& dwo, Mat<S>& dkeys,
                               Mat<S>& dvalues) {
  const int rows = static_cast<int>(x.rows());
  const int d = static_cast<int>(wq.cols());
  const int n = static_cast<int>(keys.rows());
  const int dk = d / heads;
  const S scale = S(1) / std::sqrt(static_cast<S>(dk));
  dwo.noalias() += ctx.transpose() * dout;
  Mat<S> dctx = dout * wo.transpose();
  Mat<S> dq(rows, d);
  for (int i = 0; i < heads; ++i) {
    const auto p = probs.middleCols(i * n, n);
    Mat<S> dp = dctx.middleCols(i * dk, dk) * values.middleCols(i * dk, dk).transpose();
    dvalues.middleCols(i * dk, dk).noalias() += p.transpose() * dctx.middleCols(i * dk, dk);
    Mat<S> ds = softmax_backward(Mat<S>(p), dp) * scale;
    dq.middleCols(i * dk, dk).noalias() = ds * keys.middleCols(i * dk, dk);
    dkeys.middleCols(i * dk, dk).noalias() += ds.transpose() * q.middleCols(i * dk, dk);
  }
  dwq.noalias() += x.transpose() * dq;
  return dq * wq.transpose();
}

}  // namespace detail

// The cross-attention operation on its own: queries from hidden states h,
// keys/values from the prompt embedding, multi-head, concatenated before wo.
// The caller adds the result to the residual stream.
template <typename S>
Mat<S> cross_attention(const Mat<S>& h, const Mat<S>& c_emb, const BlockWeightsT<S>& b,
                       int heads) {
  if (h.cols() != b.ca_wq.rows()) throw ContractViolation("hidden dim mismatch");
  if (c_emb.cols() != b.ca_wk.rows()) throw ContractViolation("prompt dim mismatch");
  if (b.ca_wq.cols() % heads != 0) throw ContractViolation("dim not divisible by heads");
  Mat<S> keys = c_emb * b.ca_wk, values = c_emb * b.ca_wv;
  return detail::attention_core(h, keys, values, b.ca_wq, b.ca_wo, heads, nullptr, nullptr,
                                nullptr);
}

// Full denoiser pass: per block self-attention, cross-attention (with hook
// interception at K/V and at the block output), feed-forward, all with
// residual additions; returns the noise estimate.
//
// Hooks fire only for float instantiations (inference); trace is optional and
// captures everything the backward pass needs.
template <typename S>
Mat<S> forward_denoise(const WeightsT<S>& w, const Mat<S>& z, int t, const Mat<S>& c_emb,
                       const HookSet* hooks, ForwardTrace<S>* trace) {
  const auto& cfg = w.config;
  const int F = cfg.frames, d = cfg.dim, H = cfg.heads;
  if (t < 0 || t >= cfg.timesteps) throw ContractViolation("timestep out of range");
  if (z.rows() != F || z.cols() != d) throw ContractViolation("latent shape mismatch");
  if (c_emb.cols() != cfg.prompt_dim) throw ContractViolation("prompt embedding dim mismatch");
  const int Ct = static_cast<int>(c_emb.rows());

  if (trace) {
    trace->blocks.resize(static_cast<size_t>(cfg.layers));
    trace->input = z;
    trace->t = t;
  }

  Mat<S> h = z * w.in_w;
  h.rowwise() += w.in_b.transpose();
  h += w.pos_table;
  h.rowwise() += w.time_table.row(t);

  Mat<S> t1, xhat1, t2, xhat2, t3, xhat3;
  Vec<S> inv1, inv2, inv3;

  for (int l = 0; l < cfg.layers; ++l) {
    const auto& b = w.blocks[static_cast<size_t>(l)];
    BlockTrace<S>* bt = trace ? &trace->blocks[static_cast<size_t>(l)] : nullptr;
    if (bt) bt->block_in = h;

    // Self-attention over frames.
    detail::layer_norm(h, b.ln1_g, b.ln1_b, t1, xhat1, inv1);
    Mat<S> k = t1 * b.sa_wk, v = t1 * b.sa_wv;
    Mat<S> q, probs, ctx;
    Mat<S> self_out = detail::attention_core(t1, k, v, b.sa_wq, b.sa_wo, H, &q, &probs, &ctx);
    h += self_out;
    if (bt) {
      bt->xhat1 = std::move(xhat1); bt->inv1 = std::move(inv1); bt->t1 = std::move(t1);
      bt->q = std::move(q); bt->k = std::move(k); bt->v = std::move(v);
      bt->probs = std::move(probs); bt->ctx = std::move(ctx);
    }

    // Cross-attention: queries from the hidden stream, keys/values from the prompt.
    detail::layer_norm(h, b.ln2_g, b.ln2_b, t2, xhat2, inv2);
    Mat<S> kc = c_emb * b.ca_wk, vc = c_emb * b.ca_wv;
    if constexpr (std::is_same_v<S, float>) {
      if (hooks && hooks->kv_interceptor) {
        hooks->kv_interceptor(l, t, kc, vc);
        if (kc.rows() != Ct || kc.cols() != d || vc.rows() != Ct || vc.cols() != d)
          throw ContractViolation("kv interceptor changed shapes at layer " + std::to_string(l));
      }
    }
    Mat<S> qc, probs_c, ctx_c;
    Mat<S> cross_out =
        detail::attention_core(t2, kc, vc, b.ca_wq, b.ca_wo, H, &qc, &probs_c, &ctx_c);
    if constexpr (std::is_same_v<S, float>) {
      if (hooks && hooks->output_interceptor) {
        hooks->output_interceptor(l, t, cross_out);
        if (cross_out.rows() != F || cross_out.cols() != d)
          throw ContractViolation("output interceptor changed shape at layer " +
                                  std::to_string(l));
      }
      if (hooks && hooks->recorder) hooks->recorder(l, t, kc, vc, cross_out);
    }
    h += cross_out;
    if (bt) {
      bt->xhat2 = std::move(xhat2); bt->inv2 = std::move(inv2); bt->t2 = std::move(t2);
      bt->qc = std::move(qc); bt->kc = std::move(kc); bt->vc = std::move(vc);
      bt->probs_c = std::move(probs_c); bt->ctx_c = std::move(ctx_c);
    }

    // Feed-forward.
    detail::layer_norm(h, b.ln3_g, b.ln3_b, t3, xhat3, inv3);
    Mat<S> pre = t3 * b.ff_w1;
    pre.rowwise() += b.ff_b1.transpose();
    Mat<S> act = pre.unaryExpr([](S u) { return detail::gelu(u); });
    h.noalias() += act * b.ff_w2;
    h.rowwise() += b.ff_b2.transpose();
    if (bt) {
      bt->xhat3 = std::move(xhat3); bt->inv3 = std::move(inv3); bt->t3 = std::move(t3);
      bt->ffn_pre = std::move(pre); bt->ffn_act = std::move(act);
    }

    if (!h.allFinite())
      throw NumericFault("non-finite activations at layer " + std::to_string(l));
  }

  Mat<S> tf, xhatf;
  Vec<S> invf;
  detail::layer_norm(h, w.lnf_g, w.lnf_b, tf, xhatf, invf);
  Mat<S> eps = tf * w.out_w;
  eps.rowwise() += w.out_b.transpose();
  if (trace) {
    trace->tf = std::move(tf);
    trace->xhatf = std::move(xhatf);
    trace->invf = std::move(invf);
  }
  return eps;
}

// Backpropagates d_eps through a traced forward pass, accumulating parameter
// gradients into `grad` (same tensor layout as the weights).
template <typename S>
void backward_denoise(const WeightsT<S>& w, const ForwardTrace<S>& trace, const Mat<S>& c_emb,
                      const Mat<S>& d_eps, WeightsT<S>& grad) {
  const auto& cfg = w.config;
  const int F = cfg.frames, d = cfg.dim, H = cfg.heads;
  const int Ct = static_cast<int>(c_emb.rows());

  grad.out_w.noalias() += trace.tf.transpose() * d_eps;
  grad.out_b += d_eps.colwise().sum().transpose();
  Mat<S> d_tf = d_eps * w.out_w.transpose();
  Mat<S> dh =
      detail::layer_norm_backward(d_tf, trace.xhatf, trace.invf, w.lnf_g, grad.lnf_g, grad.lnf_b);

  for (int l = cfg.layers - 1; l >= 0; --l) {
    const auto& b = w.blocks[static_cast<size_t>(l)];
    auto& gb = grad.blocks[static_cast<size_t>(l)];
    const auto& bt = trace.blocks[static_cast<size_t>(l)];

    // Feed-forward branch.
    {
      gb.ff_b2 += dh.colwise().sum().transpose();
      gb.ff_w2.noalias() += bt.ffn_act.transpose() * dh;
      Mat<S> da = dh * b.ff_w2.transpose();
      Mat<S> du =
          da.array() * bt.ffn_pre.unaryExpr([](S u) { return detail::gelu_grad(u); }).array();
      gb.ff_b1 += du.colwise().sum().transpose();
      gb.ff_w1.noalias() += bt.t3.transpose() * du;
      Mat<S> dt3 = du * b.ff_w1.transpose();
      dh += detail::layer_norm_backward(dt3, bt.xhat3, bt.inv3, b.ln3_g, gb.ln3_g, gb.ln3_b);
    }

    // Cross-attention branch (the prompt embedding is data; no gradient there).
    {
      Mat<S> dkc = Mat<S>::Zero(Ct, d), dvc = Mat<S>::Zero(Ct, d);
      Mat<S> dt2 = detail::attention_core_backward(dh, bt.t2, bt.kc, bt.vc, b.ca_wq, b.ca_wo, H,
                                                   bt.qc, bt.probs_c, bt.ctx_c, gb.ca_wq,
                                                   gb.ca_wo, dkc, dvc);
      gb.ca_wk.noalias() += c_emb.transpose() * dkc;
      gb.ca_wv.noalias() += c_emb.transpose() * dvc;
      dh += detail::layer_norm_backward(dt2, bt.xhat2, bt.inv2, b.ln2_g, gb.ln2_g, gb.ln2_b);
    }

    // Self-attention branch.
    {
      Mat<S> dk = Mat<S>::Zero(F, d), dv = Mat<S>::Zero(F, d);
      Mat<S> dt1 = detail::attention_core_backward(dh, bt.t1, bt.k, bt.v, b.sa_wq, b.sa_wo, H,
                                                   bt.q, bt.probs, bt.ctx, gb.sa_wq, gb.sa_wo,
                                                   dk, dv);
      gb.sa_wk.noalias() += bt.t1.transpose() * dk;
      gb.sa_wv.noalias() += bt.t1.transpose() * dv;
      dt1.noalias() += dk * b.sa_wk.transpose();
      dt1.noalias() += dv * b.sa_wv.transpose();
      dh += detail::layer_norm_backward(dt1, bt.xhat1, bt.inv1, b.ln1_g, gb.ln1_g, gb.ln1_b);
    }
  }

  grad.in_w.noalias() += trace.input.transpose() * dh;
  grad.in_b += dh.colwise().sum().transpose();
  grad.time_table.row(trace.t) += dh.colwise().sum();
}

}  // namespace steerlab::dit
