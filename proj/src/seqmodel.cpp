#include "taskmode/seqmodel.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>

namespace taskmode::seqmodel {

// ---------------------------------------------------------------------------
// Config.
// ---------------------------------------------------------------------------

void ModelConfig::validate() const {
  if (vocab_size < 1) throw Error("vocab_size must be >= 1");
  if (d_model < 1 || n_layers < 1 || n_heads < 1 || max_seq_len < 1)
    throw Error("model dimensions must all be >= 1");
  if (d_model % n_heads != 0)
    throw Error("d_model (" + std::to_string(d_model) +
                ") must be divisible by n_heads (" + std::to_string(n_heads) +
                ")");
}

json ModelConfig::to_json() const {
  json j;
  j["vocab_size"] = vocab_size;
  j["d_model"] = d_model;
  j["n_layers"] = n_layers;
  j["n_heads"] = n_heads;
  j["max_seq_len"] = max_seq_len;
  j["seed"] = seed;
  return j;
}

ModelConfig ModelConfig::from_json(const json& j) {
  ModelConfig c;
  c.vocab_size = j.at("vocab_size").get<int>();
  c.d_model = j.at("d_model").get<int>();
  c.n_layers = j.at("n_layers").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.max_seq_len = j.at("max_seq_len").get<int>();
  c.seed = j.at("seed").get<uint64_t>();
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Row kernels. Both the batch path and the decode session go through these,
// with identical accumulation order, so their outputs agree bit for bit.
// ---------------------------------------------------------------------------

namespace {

constexpr double kLnEps = 1e-5;

// out[n] = bias[n] + sum_k in[k] * W[k*N + n]
template <typename S>
void linear_row(const S* in, const S* W, const S* bias, int K, int N, S* out) {
  std::memcpy(out, bias, size_t(N) * sizeof(S));
  for (int k = 0; k < K; ++k) {
    S a = in[k];
    const S* wrow = W + size_t(k) * N;
    for (int n = 0; n < N; ++n) out[n] += a * wrow[n];
  }
}

// dIn[k] = sum_n dOut[n] * W[k*N + n]
template <typename S>
void linear_row_back_input(const S* dout, const S* W, int K, int N, S* din) {
  for (int k = 0; k < K; ++k) {
    const S* wrow = W + size_t(k) * N;
    S acc = 0;
    for (int n = 0; n < N; ++n) acc += dout[n] * wrow[n];
    din[k] = acc;
  }
}

// dW[k*N + n] += in[k] * dOut[n]; dBias[n] += dOut[n]
template <typename S>
void linear_row_back_params(const S* in, const S* dout, int K, int N, S* dW,
                            S* dbias) {
  for (int n = 0; n < N; ++n) dbias[n] += dout[n];
  for (int k = 0; k < K; ++k) {
    S a = in[k];
    S* wrow = dW + size_t(k) * N;
    for (int n = 0; n < N; ++n) wrow[n] += a * dout[n];
  }
}

template <typename S>
void layernorm_row(const S* x, const S* gamma, const S* beta, int D, S* out,
                   S* mu_out, S* rstd_out) {
  S mu = 0;
  for (int d = 0; d < D; ++d) mu += x[d];
  mu /= S(D);
  S var = 0;
  for (int d = 0; d < D; ++d) {
    S c = x[d] - mu;
    var += c * c;
  }
  var /= S(D);
  S rstd = S(1) / std::sqrt(var + S(kLnEps));
  for (int d = 0; d < D; ++d) out[d] = gamma[d] * ((x[d] - mu) * rstd) + beta[d];
  *mu_out = mu;
  *rstd_out = rstd;
}

// Backward through layer norm for one row; accumulates into dgamma/dbeta,
// adds the input gradient into dx.
template <typename S>
void layernorm_row_back(const S* x, S mu, S rstd, const S* gamma, const S* dy,
                        int D, S* dx, S* dgamma, S* dbeta) {
  S m1 = 0, m2 = 0;
  for (int d = 0; d < D; ++d) {
    S xhat = (x[d] - mu) * rstd;
    S dxhat = dy[d] * gamma[d];
    dgamma[d] += dy[d] * xhat;
    dbeta[d] += dy[d];
    m1 += dxhat;
    m2 += dxhat * xhat;
  }
  m1 /= S(D);
  m2 /= S(D);
  for (int d = 0; d < D; ++d) {
    S xhat = (x[d] - mu) * rstd;
    S dxhat = dy[d] * gamma[d];
    dx[d] += rstd * (dxhat - m1 - xhat * m2);
  }
}

// GELU, tanh approximation (smooth, so finite differences behave).
template <typename S>
inline S gelu(S x) {
  const S c = S(0.7978845608028654);  // sqrt(2/pi)
  S u = c * (x + S(0.044715) * x * x * x);
  return S(0.5) * x * (S(1) + std::tanh(u));
}

template <typename S>
inline S gelu_grad(S x) {
  const S c = S(0.7978845608028654);
  S u = c * (x + S(0.044715) * x * x * x);
  S t = std::tanh(u);
  S du = c * (S(1) + S(3) * S(0.044715) * x * x);
  return S(0.5) * (S(1) + t) + S(0.5) * x * (S(1) - t * t) * du;
}

// loss = logsumexp(logits) - logits[target]
template <typename S>
double ce_from_logits(const S* logits, int V, int target) {
  S mx = logits[0];
  for (int v = 1; v < V; ++v) mx = std::max(mx, logits[v]);
  double sum = 0;
  for (int v = 0; v < V; ++v) sum += std::exp(double(logits[v] - mx));
  return std::log(sum) + double(mx) - double(logits[target]);
}

// dlogits[v] = w * (softmax(logits)[v] - [v == target])
template <typename S>
void ce_backward_row(const S* logits, int V, int target, S w, S* dlogits) {
  S mx = logits[0];
  for (int v = 1; v < V; ++v) mx = std::max(mx, logits[v]);
  S sum = 0;
  for (int v = 0; v < V; ++v) sum += std::exp(logits[v] - mx);
  S inv = S(1) / sum;
  for (int v = 0; v < V; ++v)
    dlogits[v] = w * std::exp(logits[v] - mx) * inv;
  dlogits[target] -= w;
}

}  // namespace

// ---------------------------------------------------------------------------
// Construction / parameter layout.
// ---------------------------------------------------------------------------

template <typename S>
Net<S>::Net(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  ffn_dim_ = 4 * cfg_.d_model;
  const int D = cfg_.d_model, F = ffn_dim_, V = cfg_.vocab_size;

  size_t cursor = 0;
  auto add = [&](const std::string& name, std::vector<int> shape) {
    size_t count = 1;
    for (int s : shape) count *= size_t(s);
    specs_.push_back({name, cursor, std::move(shape), count});
    size_t off = cursor;
    cursor += count;
    return off;
  };

  tok_emb_ = add("tok_emb", {V, D});
  pos_emb_ = add("pos_emb", {cfg_.max_seq_len, D});
  layers_.resize(cfg_.n_layers);
  for (int l = 0; l < cfg_.n_layers; ++l) {
    std::string p = "layer" + std::to_string(l) + ".";
    auto& lo = layers_[l];
    lo.ln1_g = add(p + "ln1.gamma", {D});
    lo.ln1_b = add(p + "ln1.beta", {D});
    lo.wq = add(p + "attn.wq", {D, D});
    lo.bq = add(p + "attn.bq", {D});
    lo.wk = add(p + "attn.wk", {D, D});
    lo.bk = add(p + "attn.bk", {D});
    lo.wv = add(p + "attn.wv", {D, D});
    lo.bv = add(p + "attn.bv", {D});
    lo.wo = add(p + "attn.wo", {D, D});
    lo.bo = add(p + "attn.bo", {D});
    lo.ln2_g = add(p + "ln2.gamma", {D});
    lo.ln2_b = add(p + "ln2.beta", {D});
    lo.w1 = add(p + "ffn.w1", {D, F});
    lo.b1 = add(p + "ffn.b1", {F});
    lo.w2 = add(p + "ffn.w2", {F, D});
    lo.b2 = add(p + "ffn.b2", {D});
  }
  lnf_g_ = add("lnf.gamma", {D});
  lnf_b_ = add("lnf.beta", {D});
  head_w_ = add("head.w", {D, V});
  head_b_ = add("head.b", {V});

  params_.assign(cursor, S(0));

  // Weights ~ N(0, 0.02^2); biases zero; layer-norm gains one.
  Rng rng(cfg_.seed);
  auto fill_normal = [&](size_t off, size_t count) {
    for (size_t i = 0; i < count; ++i)
      params_[off + i] = S(rng.normal(0.0, 0.02));
  };
  for (const auto& spec : specs_) {
    bool is_weight = spec.shape.size() == 2;
    bool is_gamma = spec.name.ends_with("gamma");
    if (is_weight)
      fill_normal(spec.offset, spec.count);
    else if (is_gamma)
      std::fill_n(params_.begin() + spec.offset, spec.count, S(1));
  }
}

// ---------------------------------------------------------------------------
// Forward.
// ---------------------------------------------------------------------------

template <typename S>
struct Net<S>::Cache {
  int T = 0;
  std::vector<int> tokens;
  // xs[l] = input of layer l (xs[n_layers] = final pre-norm activations).
  std::vector<std::vector<S>> xs;
  struct LayerCache {
    std::vector<S> a, q, k, v, probs, ctx, x1, b, h1, g;
    std::vector<S> mu1, rstd1, mu2, rstd2;
  };
  std::vector<LayerCache> layers;
  std::vector<S> y, lnf_mu, lnf_rstd, logits;
};

template <typename S>
void Net<S>::attend_row(int layer, int t, const S* k_all, const S* v_all,
                        const S* q_row, S* probs_row, S* ctx_row) const {
  (void)layer;
  const int D = cfg_.d_model, H = cfg_.n_heads, hd = D / H;
  const S inv_sqrt = S(1) / std::sqrt(S(hd));
  for (int h = 0; h < H; ++h) {
    const S* qh = q_row + h * hd;
    S* ph = probs_row + size_t(h) * (t + 1);
    S mx = std::numeric_limits<S>::lowest();
    for (int u = 0; u <= t; ++u) {
      const S* kh = k_all + size_t(u) * D + h * hd;
      S dot = 0;
      for (int d = 0; d < hd; ++d) dot += qh[d] * kh[d];
      ph[u] = dot * inv_sqrt;
      mx = std::max(mx, ph[u]);
    }
    S sum = 0;
    for (int u = 0; u <= t; ++u) {
      ph[u] = std::exp(ph[u] - mx);
      sum += ph[u];
    }
    S inv = S(1) / sum;
    for (int u = 0; u <= t; ++u) ph[u] *= inv;
    S* ch = ctx_row + h * hd;
    std::fill_n(ch, hd, S(0));
    for (int u = 0; u <= t; ++u) {
      const S* vh = v_all + size_t(u) * D + h * hd;
      S p = ph[u];
      for (int d = 0; d < hd; ++d) ch[d] += p * vh[d];
    }
  }
}

template <typename S>
void Net<S>::run_forward(const std::vector<int>& tokens, Cache& c) const {
  const int D = cfg_.d_model, F = ffn_dim_, V = cfg_.vocab_size;
  const int T = int(tokens.size());
  if (T == 0) throw Error("forward requires a non-empty token sequence");
  if (T > cfg_.max_seq_len)
    throw Error("sequence length " + std::to_string(T) +
                " exceeds max_seq_len " + std::to_string(cfg_.max_seq_len));
  for (int tok : tokens)
    if (tok < 0 || tok >= V)
      throw Error("token id " + std::to_string(tok) +
                  " outside vocab of size " + std::to_string(V));

  const S* P = params_.data();
  c.T = T;
  c.tokens = tokens;
  c.xs.assign(size_t(cfg_.n_layers) + 1, std::vector<S>(size_t(T) * D));
  c.layers.assign(cfg_.n_layers, {});

  for (int t = 0; t < T; ++t) {
    const S* te = P + tok_emb_ + size_t(tokens[t]) * D;
    const S* pe = P + pos_emb_ + size_t(t) * D;
    S* x = c.xs[0].data() + size_t(t) * D;
    for (int d = 0; d < D; ++d) x[d] = te[d] + pe[d];
  }

  for (int l = 0; l < cfg_.n_layers; ++l) {
    const auto& lo = layers_[l];
    auto& lc = c.layers[l];
    const std::vector<S>& xin = c.xs[l];
    lc.a.resize(size_t(T) * D);
    lc.q.resize(size_t(T) * D);
    lc.k.resize(size_t(T) * D);
    lc.v.resize(size_t(T) * D);
    lc.probs.assign(size_t(cfg_.n_heads) * T * T, S(0));
    lc.ctx.resize(size_t(T) * D);
    lc.x1.resize(size_t(T) * D);
    lc.b.resize(size_t(T) * D);
    lc.h1.resize(size_t(T) * F);
    lc.g.resize(size_t(T) * F);
    lc.mu1.resize(T);
    lc.rstd1.resize(T);
    lc.mu2.resize(T);
    lc.rstd2.resize(T);

    for (int t = 0; t < T; ++t)
      layernorm_row(xin.data() + size_t(t) * D, P + lo.ln1_g, P + lo.ln1_b, D,
                    lc.a.data() + size_t(t) * D, &lc.mu1[t], &lc.rstd1[t]);
    for (int t = 0; t < T; ++t) {
      const S* a = lc.a.data() + size_t(t) * D;
      linear_row(a, P + lo.wq, P + lo.bq, D, D, lc.q.data() + size_t(t) * D);
      linear_row(a, P + lo.wk, P + lo.bk, D, D, lc.k.data() + size_t(t) * D);
      linear_row(a, P + lo.wv, P + lo.bv, D, D, lc.v.data() + size_t(t) * D);
    }
    std::vector<S> attn_row(D);
    std::vector<S> compact(size_t(cfg_.n_heads) * T);
    for (int t = 0; t < T; ++t) {
      // attend_row writes compact per-head rows [h][0..t]; scatter them into
      // the cached [h][t][u] layout the backward pass indexes.
      S* prow = lc.probs.data();
      attend_row(l, t, lc.k.data(), lc.v.data(),
                 lc.q.data() + size_t(t) * D, compact.data(),
                 lc.ctx.data() + size_t(t) * D);
      for (int h = 0; h < cfg_.n_heads; ++h)
        std::copy_n(compact.data() + size_t(h) * (t + 1), t + 1,
                    prow + size_t(h) * T * T + size_t(t) * T);
      linear_row(lc.ctx.data() + size_t(t) * D, P + lo.wo, P + lo.bo, D, D,
                 attn_row.data());
      const S* x0 = xin.data() + size_t(t) * D;
      S* x1 = lc.x1.data() + size_t(t) * D;
      for (int d = 0; d < D; ++d) x1[d] = x0[d] + attn_row[d];
    }
    std::vector<S> ff_row(D);
    for (int t = 0; t < T; ++t) {
      layernorm_row(lc.x1.data() + size_t(t) * D, P + lo.ln2_g, P + lo.ln2_b,
                    D, lc.b.data() + size_t(t) * D, &lc.mu2[t], &lc.rstd2[t]);
      linear_row(lc.b.data() + size_t(t) * D, P + lo.w1, P + lo.b1, D, F,
                 lc.h1.data() + size_t(t) * F);
      S* g = lc.g.data() + size_t(t) * F;
      const S* h1 = lc.h1.data() + size_t(t) * F;
      for (int f = 0; f < F; ++f) g[f] = gelu(h1[f]);
      linear_row(g, P + lo.w2, P + lo.b2, F, D, ff_row.data());
      const S* x1 = lc.x1.data() + size_t(t) * D;
      S* xo = c.xs[l + 1].data() + size_t(t) * D;
      for (int d = 0; d < D; ++d) xo[d] = x1[d] + ff_row[d];
    }
  }

  c.y.resize(size_t(T) * D);
  c.lnf_mu.resize(T);
  c.lnf_rstd.resize(T);
  c.logits.resize(size_t(T) * V);
  const std::vector<S>& xfin = c.xs[cfg_.n_layers];
  for (int t = 0; t < T; ++t) {
    layernorm_row(xfin.data() + size_t(t) * D, P + lnf_g_, P + lnf_b_, D,
                  c.y.data() + size_t(t) * D, &c.lnf_mu[t], &c.lnf_rstd[t]);
    linear_row(c.y.data() + size_t(t) * D, P + head_w_, P + head_b_, D, V,
               c.logits.data() + size_t(t) * V);
  }
}

template <typename S>
std::vector<S> Net<S>::forward(const std::vector<int>& tokens) const {
  Cache c;
  run_forward(tokens, c);
  return std::move(c.logits);
}

// ---------------------------------------------------------------------------
// Losses / backward.
// ---------------------------------------------------------------------------

namespace {

void check_mask(const std::vector<int>& tokens,
                const std::vector<uint8_t>& mask) {
  if (mask.size() != tokens.size())
    throw Error("target_mask length " + std::to_string(mask.size()) +
                " != token length " + std::to_string(tokens.size()));
  size_t n = 0;
  for (size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    if (i == 0)
      throw Error("position 0 cannot be supervised: no preceding context");
    ++n;
  }
  if (n == 0) throw Error("target_mask selects no positions");
}

}  // namespace

template <typename S>
std::vector<PositionLoss> Net<S>::token_losses(
    const std::vector<int>& tokens,
    const std::vector<uint8_t>& target_mask) const {
  check_mask(tokens, target_mask);
  Cache c;
  run_forward(tokens, c);
  const int V = cfg_.vocab_size;
  std::vector<PositionLoss> out;
  for (size_t p = 1; p < tokens.size(); ++p)
    if (target_mask[p])
      out.push_back({int(p), ce_from_logits(c.logits.data() + (p - 1) * V, V,
                                            tokens[p])});
  return out;
}

template <typename S>
std::vector<PositionLoss> Net<S>::forward_backward(
    const std::vector<int>& tokens, const std::vector<uint8_t>& target_mask,
    const std::vector<S>& pos_weight, std::vector<S>& grad) const {
  check_mask(tokens, target_mask);
  if (pos_weight.size() != tokens.size())
    throw Error("pos_weight length must match token length");
  if (grad.size() != params_.size())
    throw Error("gradient buffer has wrong size");

  Cache c;
  run_forward(tokens, c);
  const int D = cfg_.d_model, F = ffn_dim_, V = cfg_.vocab_size;
  const int T = c.T;
  const int H = cfg_.n_heads, hd = D / H;
  const S inv_sqrt = S(1) / std::sqrt(S(hd));
  const S* P = params_.data();
  S* G = grad.data();

  std::vector<PositionLoss> out;
  std::vector<S> dlogits(size_t(T) * V, S(0));
  for (int p = 1; p < T; ++p) {
    if (!target_mask[p]) continue;
    const S* row = c.logits.data() + size_t(p - 1) * V;
    out.push_back({p, ce_from_logits(row, V, tokens[p])});
    ce_backward_row(row, V, tokens[p], pos_weight[p],
                    dlogits.data() + size_t(p - 1) * V);
  }

  // Rows whose next position is unsupervised carry zero logit gradient; the
  // head and final-norm backward skip them (adding exact zeros otherwise).
  std::vector<uint8_t> row_active(T, 0);
  for (int p = 1; p < T; ++p)
    if (target_mask[p]) row_active[p - 1] = 1;

  // Head and final norm.
  std::vector<S> dx(size_t(T) * D, S(0));
  {
    std::vector<S> dy(size_t(T) * D, S(0));
    for (int t = 0; t < T; ++t) {
      if (!row_active[t]) continue;
      const S* dl = dlogits.data() + size_t(t) * V;
      linear_row_back_params(c.y.data() + size_t(t) * D, dl, D, V,
                             G + head_w_, G + head_b_);
      linear_row_back_input(dl, P + head_w_, D, V, dy.data() + size_t(t) * D);
    }
    const std::vector<S>& xfin = c.xs[cfg_.n_layers];
    for (int t = 0; t < T; ++t) {
      if (!row_active[t]) continue;
      layernorm_row_back(xfin.data() + size_t(t) * D, c.lnf_mu[t],
                         c.lnf_rstd[t], P + lnf_g_,
                         dy.data() + size_t(t) * D, D,
                         dx.data() + size_t(t) * D, G + lnf_g_, G + lnf_b_);
    }
  }

  std::vector<S> dff(D), dg(size_t(T) * F), dh1(size_t(T) * F), db(D);
  std::vector<S> dx1(size_t(T) * D), dctx(size_t(T) * D);
  std::vector<S> dq(size_t(T) * D), dk(size_t(T) * D), dv(size_t(T) * D);
  std::vector<S> da(D), dp(static_cast<size_t>(T));

  for (int l = cfg_.n_layers - 1; l >= 0; --l) {
    const auto& lo = layers_[l];
    const auto& lc = c.layers[l];

    // Feed-forward block: x2 = x1 + W2(gelu(W1(ln2(x1)))).
    std::fill(dx1.begin(), dx1.end(), S(0));
    for (int t = 0; t < T; ++t) {
      const S* dxo = dx.data() + size_t(t) * D;
      linear_row_back_params(lc.g.data() + size_t(t) * F, dxo, F, D,
                             G + lo.w2, G + lo.b2);
      linear_row_back_input(dxo, P + lo.w2, F, D, dg.data() + size_t(t) * F);
      const S* h1 = lc.h1.data() + size_t(t) * F;
      S* dh = dh1.data() + size_t(t) * F;
      const S* dgr = dg.data() + size_t(t) * F;
      for (int f = 0; f < F; ++f) dh[f] = dgr[f] * gelu_grad(h1[f]);
      linear_row_back_params(lc.b.data() + size_t(t) * D, dh, D, F, G + lo.w1,
                             G + lo.b1);
      linear_row_back_input(dh, P + lo.w1, D, F, db.data());
      S* dx1r = dx1.data() + size_t(t) * D;
      for (int d = 0; d < D; ++d) dx1r[d] = dxo[d];  // residual branch
      layernorm_row_back(lc.x1.data() + size_t(t) * D, lc.mu2[t], lc.rstd2[t],
                         P + lo.ln2_g, db.data(), D, dx1r, G + lo.ln2_g,
                         G + lo.ln2_b);
    }

    // Attention block: x1 = x0 + Wo(attend(ln1(x0))).
    std::fill(dq.begin(), dq.end(), S(0));
    std::fill(dk.begin(), dk.end(), S(0));
    std::fill(dv.begin(), dv.end(), S(0));
    for (int t = 0; t < T; ++t) {
      const S* dattn = dx1.data() + size_t(t) * D;
      linear_row_back_params(lc.ctx.data() + size_t(t) * D, dattn, D, D,
                             G + lo.wo, G + lo.bo);
      linear_row_back_input(dattn, P + lo.wo, D, D,
                            dctx.data() + size_t(t) * D);
    }
    for (int h = 0; h < H; ++h) {
      for (int t = 0; t < T; ++t) {
        const S* ph = lc.probs.data() + size_t(h) * T * T + size_t(t) * T;
        const S* dch = dctx.data() + size_t(t) * D + h * hd;
        S dot_pdp = 0;
        for (int u = 0; u <= t; ++u) {
          const S* vh = lc.v.data() + size_t(u) * D + h * hd;
          S acc = 0;
          for (int d = 0; d < hd; ++d) acc += dch[d] * vh[d];
          dp[u] = acc;
          dot_pdp += ph[u] * acc;
          S* dvh = dv.data() + size_t(u) * D + h * hd;
          for (int d = 0; d < hd; ++d) dvh[d] += ph[u] * dch[d];
        }
        const S* qh = lc.q.data() + size_t(t) * D + h * hd;
        S* dqh = dq.data() + size_t(t) * D + h * hd;
        for (int u = 0; u <= t; ++u) {
          S ds = ph[u] * (dp[u] - dot_pdp) * inv_sqrt;
          const S* kh = lc.k.data() + size_t(u) * D + h * hd;
          S* dkh = dk.data() + size_t(u) * D + h * hd;
          for (int d = 0; d < hd; ++d) {
            dqh[d] += ds * kh[d];
            dkh[d] += ds * qh[d];
          }
        }
      }
    }
    const std::vector<S>& xin = c.xs[l];
    std::vector<S> tmp(D);
    for (int t = 0; t < T; ++t) {
      const S* a = lc.a.data() + size_t(t) * D;
      linear_row_back_params(a, dq.data() + size_t(t) * D, D, D, G + lo.wq,
                             G + lo.bq);
      linear_row_back_params(a, dk.data() + size_t(t) * D, D, D, G + lo.wk,
                             G + lo.bk);
      linear_row_back_params(a, dv.data() + size_t(t) * D, D, D, G + lo.wv,
                             G + lo.bv);
      linear_row_back_input(dq.data() + size_t(t) * D, P + lo.wq, D, D,
                            da.data());
      linear_row_back_input(dk.data() + size_t(t) * D, P + lo.wk, D, D,
                            tmp.data());
      for (int d = 0; d < D; ++d) da[d] += tmp[d];
      linear_row_back_input(dv.data() + size_t(t) * D, P + lo.wv, D, D,
                            tmp.data());
      for (int d = 0; d < D; ++d) da[d] += tmp[d];
      // dx0 = dx1 (residual) + ln1 backward contribution.
      S* dx0 = dx.data() + size_t(t) * D;
      const S* dx1r = dx1.data() + size_t(t) * D;
      for (int d = 0; d < D; ++d) dx0[d] = dx1r[d];
      layernorm_row_back(xin.data() + size_t(t) * D, lc.mu1[t], lc.rstd1[t],
                         P + lo.ln1_g, da.data(), D, dx0, G + lo.ln1_g,
                         G + lo.ln1_b);
    }
  }

  for (int t = 0; t < T; ++t) {
    const S* dx0 = dx.data() + size_t(t) * D;
    S* gt = G + tok_emb_ + size_t(c.tokens[t]) * D;
    S* gp = G + pos_emb_ + size_t(t) * D;
    for (int d = 0; d < D; ++d) {
      gt[d] += dx0[d];
      gp[d] += dx0[d];
    }
  }
  return out;
}

template <typename S>
double weighted_loss(const Net<S>& net, const std::vector<int>& tokens,
                     const std::vector<uint8_t>& target_mask,
                     const std::vector<S>& pos_weight) {
  auto losses = net.token_losses(tokens, target_mask);
  double total = 0;
  for (const auto& pl : losses) total += double(pos_weight[pl.pos]) * pl.loss;
  return total;
}

// ---------------------------------------------------------------------------
// Incremental decoding.
// ---------------------------------------------------------------------------

template <typename S>
Net<S>::Session::Session(const Net& net) : net_(&net) {
  const auto& cfg = net.cfg_;
  k_cache_.assign(size_t(cfg.n_layers) * cfg.max_seq_len * cfg.d_model, S(0));
  v_cache_.assign(size_t(cfg.n_layers) * cfg.max_seq_len * cfg.d_model, S(0));
  x_.resize(cfg.d_model);
  logits_.resize(cfg.vocab_size);
  a_.resize(cfg.d_model);
  qrow_.resize(cfg.d_model);
  ctx_.resize(cfg.d_model);
  attn_.resize(cfg.d_model);
  b_.resize(cfg.d_model);
  h1_.resize(net.ffn_dim_);
  g_.resize(net.ffn_dim_);
  ff_.resize(cfg.d_model);
  y_.resize(cfg.d_model);
  probs_.resize(size_t(cfg.n_heads) * cfg.max_seq_len);
}

template <typename S>
const std::vector<S>& Net<S>::Session::feed(int token) {
  const Net& net = *net_;
  const auto& cfg = net.cfg_;
  const int D = cfg.d_model, F = net.ffn_dim_, V = cfg.vocab_size;
  if (pos_ >= cfg.max_seq_len)
    throw Error("decode session exceeded max_seq_len " +
                std::to_string(cfg.max_seq_len));
  if (token < 0 || token >= V)
    throw Error("token id " + std::to_string(token) +
                " outside vocab of size " + std::to_string(V));
  const S* P = net.params_.data();
  const int t = pos_;

  const S* te = P + net.tok_emb_ + size_t(token) * D;
  const S* pe = P + net.pos_emb_ + size_t(t) * D;
  for (int d = 0; d < D; ++d) x_[d] = te[d] + pe[d];

  S mu, rstd;
  for (int l = 0; l < cfg.n_layers; ++l) {
    const auto& lo = net.layers_[l];
    S* kc = k_cache_.data() + size_t(l) * cfg.max_seq_len * D;
    S* vc = v_cache_.data() + size_t(l) * cfg.max_seq_len * D;
    layernorm_row(x_.data(), P + lo.ln1_g, P + lo.ln1_b, D, a_.data(), &mu,
                  &rstd);
    linear_row(a_.data(), P + lo.wq, P + lo.bq, D, D, qrow_.data());
    linear_row(a_.data(), P + lo.wk, P + lo.bk, D, D, kc + size_t(t) * D);
    linear_row(a_.data(), P + lo.wv, P + lo.bv, D, D, vc + size_t(t) * D);
    net.attend_row(l, t, kc, vc, qrow_.data(), probs_.data(), ctx_.data());
    linear_row(ctx_.data(), P + lo.wo, P + lo.bo, D, D, attn_.data());
    for (int d = 0; d < D; ++d) x_[d] += attn_[d];
    layernorm_row(x_.data(), P + lo.ln2_g, P + lo.ln2_b, D, b_.data(), &mu,
                  &rstd);
    linear_row(b_.data(), P + lo.w1, P + lo.b1, D, F, h1_.data());
    for (int f = 0; f < F; ++f) g_[f] = gelu(h1_[f]);
    linear_row(g_.data(), P + lo.w2, P + lo.b2, F, D, ff_.data());
    for (int d = 0; d < D; ++d) x_[d] += ff_[d];
  }
  layernorm_row(x_.data(), P + net.lnf_g_, P + net.lnf_b_, D, y_.data(), &mu,
                &rstd);
  linear_row(y_.data(), P + net.head_w_, P + net.head_b_, D, V,
             logits_.data());
  ++pos_;
  return logits_;
}

// ---------------------------------------------------------------------------
// Checkpoints.
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'T', 'M', 'C', 'K'};
constexpr uint32_t kCheckpointVersion = 1;

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take(const std::string& in, size_t& off) {
  if (off + sizeof(T) > in.size()) throw Error("checkpoint truncated");
  T v;
  std::memcpy(&v, in.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

}  // namespace

void save_checkpoint(const NetF& net, const std::string& path) {
  static_assert(std::endian::native == std::endian::little,
                "checkpoint format is little-endian");
  std::string out;
  out.append(kMagic, 4);
  put<uint32_t>(out, kCheckpointVersion);
  std::string cfg = net.config().to_json().dump();
  put<uint32_t>(out, uint32_t(cfg.size()));
  out += cfg;
  put<uint32_t>(out, uint32_t(net.tensor_specs().size()));
  for (const auto& spec : net.tensor_specs()) {
    put<uint16_t>(out, uint16_t(spec.name.size()));
    out += spec.name;
    put<uint8_t>(out, uint8_t(spec.shape.size()));
    for (int s : spec.shape) put<uint32_t>(out, uint32_t(s));
    put<uint64_t>(out, spec.count);
    out.append(reinterpret_cast<const char*>(net.params().data() + spec.offset),
               spec.count * sizeof(float));
  }
  write_file(path, out);
}

NetF load_checkpoint(const std::string& path) {
  if (!file_exists(path))
    throw MissingArtifact(path, "taskmode train --out <run-dir>");
  std::string in = read_file(path);
  size_t off = 0;
  if (in.size() < 8 || std::memcmp(in.data(), kMagic, 4) != 0)
    throw Error("not a checkpoint file: " + path);
  off = 4;
  uint32_t version = take<uint32_t>(in, off);
  if (version != kCheckpointVersion)
    throw Error("unsupported checkpoint version " + std::to_string(version));
  uint32_t cfg_len = take<uint32_t>(in, off);
  if (off + cfg_len > in.size()) throw Error("checkpoint truncated");
  ModelConfig cfg = ModelConfig::from_json(json::parse(in.substr(off, cfg_len)));
  off += cfg_len;

  NetF net(cfg);
  uint32_t n_tensors = take<uint32_t>(in, off);
  if (n_tensors != net.tensor_specs().size())
    throw Error("checkpoint tensor count mismatch");
  for (const auto& spec : net.tensor_specs()) {
    uint16_t name_len = take<uint16_t>(in, off);
    if (off + name_len > in.size()) throw Error("checkpoint truncated");
    std::string name = in.substr(off, name_len);
    off += name_len;
    if (name != spec.name)
      throw Error("checkpoint tensor order mismatch: expected " + spec.name +
                  ", found " + name);
    uint8_t ndim = take<uint8_t>(in, off);
    if (ndim != spec.shape.size())
      throw Error("checkpoint shape mismatch for " + name);
    for (int s : spec.shape) {
      uint32_t dim = take<uint32_t>(in, off);
      if (dim != uint32_t(s))
        throw Error("checkpoint shape mismatch for " + name);
    }
    uint64_t count = take<uint64_t>(in, off);
    if (count != spec.count) throw Error("checkpoint size mismatch for " + name);
    if (off + count * sizeof(float) > in.size())
      throw Error("checkpoint truncated in " + name);
    std::memcpy(net.params().data() + spec.offset, in.data() + off,
                count * sizeof(float));
    off += count * sizeof(float);
  }
  if (off != in.size()) throw Error("trailing bytes in checkpoint: " + path);
  return net;
}

template class Net<float>;
template class Net<double>;
template double weighted_loss<float>(const Net<float>&,
                                     const std::vector<int>&,
                                     const std::vector<uint8_t>&,
                                     const std::vector<float>&);
template double weighted_loss<double>(const Net<double>&,
                                      const std::vector<int>&,
                                      const std::vector<uint8_t>&,
                                      const std::vector<double>&);

}  // namespace taskmode::seqmodel
