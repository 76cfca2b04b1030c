#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "gshn/param.hpp"
#include "gshn/tensor.hpp"
#include "gshn/vocab.hpp"

namespace gshn {

constexpr double kLnEps = 1e-5;

struct LayerNormParams {
  Parameter gamma, beta;
};

inline LayerNormParams make_layer_norm(const std::string& prefix,
                                       std::size_t d) {
  return {make_const_param(prefix + ".gamma", {d}, 1.0),
          make_zero_param(prefix + ".beta", {d})};
}

struct LnCache {
  Tensor xhat;
  std::vector<double> inv_std;
};

inline Tensor ln_forward(const Tensor& x, const LayerNormParams& p,
                         LnCache* cache = nullptr) {
  std::size_t n = x.rows(), d = x.cols();
  Tensor out({n, d}), xhat({n, d});
  std::vector<double> inv_std(n);
  for (std::size_t i = 0; i < n; ++i) {
    double mean = 0.0, var = 0.0;
    for (std::size_t k = 0; k < d; ++k) mean += x.at(i, k);
    mean /= static_cast<double>(d);
    for (std::size_t k = 0; k < d; ++k) {
      double dv = x.at(i, k) - mean;
      var += dv * dv;
    }
    var /= static_cast<double>(d);
    inv_std[i] = 1.0 / std::sqrt(var + kLnEps);
    for (std::size_t k = 0; k < d; ++k) {
      double xh = (x.at(i, k) - mean) * inv_std[i];
      xhat.at(i, k) = xh;
      out.at(i, k) = p.gamma.value[k] * xh + p.beta.value[k];
    }
  }
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return out;
}

inline Tensor ln_backward(const Tensor& d_out, LayerNormParams& p,
                          const LnCache& cache) {
  std::size_t n = d_out.rows(), d = d_out.cols();
  Tensor dx({n, d});
  Tensor dgamma({d}), dbeta({d});
  for (std::size_t i = 0; i < n; ++i) {
    double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      double g = d_out.at(i, k);
      double xh = cache.xhat.at(i, k);
      dgamma[k] += g * xh;
      dbeta[k] += g;
      double dxh = g * p.gamma.value[k];
      sum_dxhat += dxh;
      sum_dxhat_xhat += dxh * xh;
    }
    double dd = static_cast<double>(d);
    for (std::size_t k = 0; k < d; ++k) {
      double dxh = d_out.at(i, k) * p.gamma.value[k];
      dx.at(i, k) = cache.inv_std[i] *
                    (dxh - sum_dxhat / dd -
                     cache.xhat.at(i, k) * sum_dxhat_xhat / dd);
    }
  }
  p.gamma.accumulate(dgamma);
  p.beta.accumulate(dbeta);
  return dx;
}

inline double gelu(double x) {
  return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
}
inline double gelu_grad(double x) {
  double cdf = 0.5 * (1.0 + std::erf(x / std::sqrt(2.0)));
  double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * 3.14159265358979323846);
  return cdf + x * pdf;
}

struct TransformerLayer {
  LayerNormParams ln1, ln2;
  Parameter Wq, Wk, Wv, Wo;  // d x d
  Parameter bq, bk, bv, bo;  // d
  Parameter W1, b1;          // d x ff, ff
  Parameter W2, b2;          // ff x d, d
};

inline TransformerLayer make_transformer_layer(const std::string& prefix,
                                               std::size_t d, std::size_t ff,
                                               RngStream rng) {
  double sd = 1.0 / std::sqrt(static_cast<double>(d));
  TransformerLayer l;
  l.ln1 = make_layer_norm(prefix + ".ln1", d);
  l.ln2 = make_layer_norm(prefix + ".ln2", d);
  l.Wq = make_param(prefix + ".Wq", {d, d}, rng.split(0), sd);
  l.Wk = make_param(prefix + ".Wk", {d, d}, rng.split(1), sd);
  l.Wv = make_param(prefix + ".Wv", {d, d}, rng.split(2), sd);
  l.Wo = make_param(prefix + ".Wo", {d, d}, rng.split(3), sd);
  l.bq = make_zero_param(prefix + ".bq", {d});
  l.bk = make_zero_param(prefix + ".bk", {d});
  l.bv = make_zero_param(prefix + ".bv", {d});
  l.bo = make_zero_param(prefix + ".bo", {d});
  l.W1 = make_param(prefix + ".W1", {d, ff}, rng.split(4), sd);
  l.b1 = make_zero_param(prefix + ".b1", {ff});
  l.W2 = make_param(prefix + ".W2", {ff, d}, rng.split(5),
                    1.0 / std::sqrt(static_cast<double>(ff)));
  l.b2 = make_zero_param(prefix + ".b2", {d});
  return l;
}

struct TransformerParams {
  std::vector<TransformerLayer> layers;
  std::size_t n_heads = 4;
  std::size_t model_dim = 64;
  std::size_t ff_dim = 256;
};

inline TransformerParams make_transformer(const std::string& prefix,
                                          std::size_t n_layers, std::size_t d,
                                          std::size_t n_heads, std::size_t ff,
                                          RngStream rng) {
  if (d % n_heads != 0)
    throw std::invalid_argument("make_transformer: model_dim % n_heads != 0");
  TransformerParams p;
  p.n_heads = n_heads;
  p.model_dim = d;
  p.ff_dim = ff;
  for (std::size_t i = 0; i < n_layers; ++i)
    p.layers.push_back(make_transformer_layer(
        prefix + ".layer" + std::to_string(i), d, ff, rng.split(i)));
  return p;
}

struct MhaCache {
  Tensor a;        // LN output fed to the projections
  Tensor q, k, v;  // S x d
  std::vector<Tensor> probs;  // per head, S x S
  Tensor concat;   // S x d
};

struct TfLayerCache {
  Tensor x_in;
  LnCache ln1;
  MhaCache mha;
  Tensor x_mid;
  LnCache ln2;
  Tensor b;       // LN2 output
  Tensor ff_pre;  // S x ff, pre-activation
  Tensor ff_act;  // S x ff
};

struct TransformerCache {
  std::vector<TfLayerCache> layers;
};

// key_valid[j] == false masks position j out of every attention row.
inline Tensor mha_forward(const Tensor& a, TransformerLayer& l,
                          std::size_t n_heads,
                          const std::vector<bool>& key_valid, MhaCache* cache) {
  std::size_t S = a.rows(), d = a.cols(), dh = d / n_heads;
  Tensor q = matmul(a, l.Wq.value);
  Tensor k = matmul(a, l.Wk.value);
  Tensor v = matmul(a, l.Wv.value);
  for (std::size_t i = 0; i < S; ++i)
    for (std::size_t c = 0; c < d; ++c) {
      q.at(i, c) += l.bq.value[c];
      k.at(i, c) += l.bk.value[c];
      v.at(i, c) += l.bv.value[c];
    }
  double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor concat({S, d});
  std::vector<Tensor> probs;
  Tensor mask({S, S});
  for (std::size_t i = 0; i < S; ++i)
    for (std::size_t j = 0; j < S; ++j)
      mask.at(i, j) = key_valid[j] ? 1.0 : 0.0;
  for (std::size_t h = 0; h < n_heads; ++h) {
    std::size_t off = h * dh;
    Tensor scores({S, S});
    for (std::size_t i = 0; i < S; ++i)
      for (std::size_t j = 0; j < S; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < dh; ++c)
          s += q.at(i, off + c) * k.at(j, off + c);
        scores.at(i, j) = s * scale;
      }
    Tensor p = softmax_rows(scores, &mask);
    for (std::size_t i = 0; i < S; ++i)
      for (std::size_t c = 0; c < dh; ++c) {
        double s = 0.0;
        for (std::size_t j = 0; j < S; ++j)
          s += p.at(i, j) * v.at(j, off + c);
        concat.at(i, off + c) = s;
      }
    probs.push_back(std::move(p));
  }
  Tensor out = matmul(concat, l.Wo.value);
  for (std::size_t i = 0; i < S; ++i)
    for (std::size_t c = 0; c < d; ++c) out.at(i, c) += l.bo.value[c];
  if (cache) {
    cache->a = a;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->probs = std::move(probs);
    cache->concat = std::move(concat);
  }
  return out;
}

inline Tensor mha_backward(const Tensor& d_out, TransformerLayer& l,
                           std::size_t n_heads,
                           const std::vector<bool>& key_valid,
                           const MhaCache& cache) {
  std::size_t S = d_out.rows(), d = d_out.cols(), dh = d / n_heads;
  double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor dbo({d});
  for (std::size_t i = 0; i < S; ++i)
    for (std::size_t c = 0; c < d; ++c) dbo[c] += d_out.at(i, c);
  l.bo.accumulate(dbo);
  auto [d_concat, dWo] = matmul_vjp(cache.concat, l.Wo.value, d_out);
  l.Wo.accumulate(dWo);

  Tensor dq({S, d}), dk({S, d}), dv({S, d});
  Tensor mask({S, S});
  for (std::size_t i = 0; i < S; ++i)
    for (std::size_t j = 0; j < S; ++j)
      mask.at(i, j) = key_valid[j] ? 1.0 : 0.0;
  for (std::size_t h = 0; h < n_heads; ++h) {
    std::size_t off = h * dh;
    const Tensor& p = cache.probs[h];
    // d_probs and dV
    Tensor dp({S, S});
    for (std::size_t i = 0; i < S; ++i)
      for (std::size_t j = 0; j < S; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < dh; ++c)
          s += d_concat.at(i, off + c) * cache.v.at(j, off + c);
        dp.at(i, j) = s;
      }
    for (std::size_t j = 0; j < S; ++j)
      for (std::size_t c = 0; c < dh; ++c) {
        double s = 0.0;
        for (std::size_t i = 0; i < S; ++i)
          s += p.at(i, j) * d_concat.at(i, off + c);
        dv.at(j, off + c) += s;
      }
    Tensor dscores = softmax_rows_vjp(p, dp, &mask);
    for (std::size_t i = 0; i < S; ++i)
      for (std::size_t j = 0; j < S; ++j) {
        double g = dscores.at(i, j) * scale;
        if (g == 0.0) continue;
        for (std::size_t c = 0; c < dh; ++c) {
          dq.at(i, off + c) += g * cache.k.at(j, off + c);
          dk.at(j, off + c) += g * cache.q.at(i, off + c);
        }
      }
  }

  Tensor dbq({d}), dbk({d}), dbv({d});
  for (std::size_t i = 0; i < S; ++i)
    for (std::size_t c = 0; c < d; ++c) {
      dbq[c] += dq.at(i, c);
      dbk[c] += dk.at(i, c);
      dbv[c] += dv.at(i, c);
    }
  l.bq.accumulate(dbq);
  l.bk.accumulate(dbk);
  l.bv.accumulate(dbv);

  auto [da_q, dWq] = matmul_vjp(cache.a, l.Wq.value, dq);
  auto [da_k, dWk] = matmul_vjp(cache.a, l.Wk.value, dk);
  auto [da_v, dWv] = matmul_vjp(cache.a, l.Wv.value, dv);
  l.Wq.accumulate(dWq);
  l.Wk.accumulate(dWk);
  l.Wv.accumulate(dWv);
  Tensor da({S, d});
  for (std::size_t i = 0; i < da.size(); ++i)
    da[i] = da_q[i] + da_k[i] + da_v[i];
  return da;
}

// Pre-norm encoder stack over an already-embedded sequence.
inline Tensor transformer_forward(const Tensor& x_in, TransformerParams& params,
                                  const std::vector<bool>& key_valid,
                                  TransformerCache* cache = nullptr) {
  if (x_in.rows() != key_valid.size())
    throw std::invalid_argument("transformer_forward: mask length mismatch");
  Tensor x = x_in;
  if (cache) cache->layers.clear();
  for (auto& layer : params.layers) {
    TfLayerCache c;
    c.x_in = x;
    Tensor a = ln_forward(x, layer.ln1, &c.ln1);
    Tensor attn = mha_forward(a, layer, params.n_heads, key_valid, &c.mha);
    Tensor x_mid(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) x_mid[i] = x[i] + attn[i];
    c.x_mid = x_mid;
    Tensor b = ln_forward(x_mid, layer.ln2, &c.ln2);
    c.b = b;
    std::size_t S = x.rows(), ff = params.ff_dim, d = params.model_dim;
    Tensor pre = matmul(b, layer.W1.value);
    for (std::size_t i = 0; i < S; ++i)
      for (std::size_t k = 0; k < ff; ++k) pre.at(i, k) += layer.b1.value[k];
    c.ff_pre = pre;
    Tensor act({S, ff});
    for (std::size_t i = 0; i < act.size(); ++i) act[i] = gelu(pre[i]);
    c.ff_act = act;
    Tensor ff_out = matmul(act, layer.W2.value);
    for (std::size_t i = 0; i < S; ++i)
      for (std::size_t k = 0; k < d; ++k) ff_out.at(i, k) += layer.b2.value[k];
    Tensor x_next(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i)
      x_next[i] = x_mid[i] + ff_out[i];
    x = std::move(x_next);
    if (cache) cache->layers.push_back(std::move(c));
  }
  return x;
}

inline Tensor transformer_backward(const Tensor& d_out_top,
                                   TransformerParams& params,
                                   const std::vector<bool>& key_valid,
                                   const TransformerCache& cache) {
  Tensor dx = d_out_top;
  for (std::size_t li = params.layers.size(); li-- > 0;) {
    TransformerLayer& layer = params.layers[li];
    const TfLayerCache& c = cache.layers[li];
    std::size_t S = dx.rows(), d = params.model_dim, ff = params.ff_dim;

    // FFN branch
    Tensor db2({d});
    for (std::size_t i = 0; i < S; ++i)
      for (std::size_t k = 0; k < d; ++k) db2[k] += dx.at(i, k);
    layer.b2.accumulate(db2);
    auto [d_act, dW2] = matmul_vjp(c.ff_act, layer.W2.value, dx);
    layer.W2.accumulate(dW2);
    Tensor d_pre({S, ff});
    for (std::size_t i = 0; i < d_pre.size(); ++i)
      d_pre[i] = d_act[i] * gelu_grad(c.ff_pre[i]);
    Tensor db1({ff});
    for (std::size_t i = 0; i < S; ++i)
      for (std::size_t k = 0; k < ff; ++k) db1[k] += d_pre.at(i, k);
    layer.b1.accumulate(db1);
    auto [d_b, dW1] = matmul_vjp(c.b, layer.W1.value, d_pre);
    layer.W1.accumulate(dW1);
    Tensor d_x_mid = ln_backward(d_b, layer.ln2, c.ln2);
    for (std::size_t i = 0; i < d_x_mid.size(); ++i) d_x_mid[i] += dx[i];

    // attention branch
    Tensor d_a =
        mha_backward(d_x_mid, layer, params.n_heads, key_valid, c.mha);
    Tensor d_x_in = ln_backward(d_a, layer.ln1, c.ln1);
    for (std::size_t i = 0; i < d_x_in.size(); ++i) d_x_in[i] += d_x_mid[i];
    dx = std::move(d_x_in);
  }
  return dx;
}

inline void collect_transformer_params(TransformerParams& p,
                                       std::vector<Parameter*>& out) {
  for (auto& l : p.layers) {
    for (Parameter* q :
         {&l.ln1.gamma, &l.ln1.beta, &l.ln2.gamma, &l.ln2.beta, &l.Wq, &l.bq,
          &l.Wk, &l.bk, &l.Wv, &l.bv, &l.Wo, &l.bo, &l.W1, &l.b1, &l.W2,
          &l.b2})
      out.push_back(q);
  }
}

}  // namespace gshn
