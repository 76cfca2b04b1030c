#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "gshn/param.hpp"
#include "gshn/tensor.hpp"
#include "gshn/transformer.hpp"
#include "gshn/vocab.hpp"

namespace gshn {

struct JointEncoderParams {
  Parameter tok_emb;  // |V| x d
  Parameter pos_emb;  // seq_cap x d
  Parameter seg_emb;  // 2 x d (visual / text)
  TransformerParams tf;
  std::size_t seq_cap = 96;
};

inline JointEncoderParams make_joint_encoder(const std::string& prefix,
                                             std::size_t vocab_size,
                                             std::size_t d, std::size_t n_layers,
                                             std::size_t n_heads,
                                             std::size_t ff_dim,
                                             std::size_t seq_cap,
                                             RngStream rng) {
  JointEncoderParams p;
  double sd = 0.02;
  p.tok_emb = make_param(prefix + ".tok_emb", {vocab_size, d}, rng.split(0), sd);
  p.pos_emb = make_param(prefix + ".pos_emb", {seq_cap, d}, rng.split(1), sd);
  p.seg_emb = make_param(prefix + ".seg_emb", {2, d}, rng.split(2), sd);
  p.tf = make_transformer(prefix + ".tf", n_layers, d, n_heads, ff_dim,
                          rng.split(3));
  p.seq_cap = seq_cap;
  return p;
}

struct JointCache {
  std::size_t n_vis = 0;
  std::vector<int> ids;
  std::vector<bool> valid;  // per sequence position; PAD text positions false
  Tensor embedded;          // S x d input to the transformer
  TransformerCache tf;
  Tensor states;            // S x d output
};

// Encode [visual tokens || text tokens]. cls index is n_vis (ids start with
// CLS). Returns the full state sequence; see cache for layout. A default-
// constructed v_prime means a text-only pass (no visual tokens).
inline Tensor joint_encode(const Tensor& v_prime, const std::vector<int>& ids,
                           JointEncoderParams& params, JointCache& cache) {
  bool has_vis = v_prime.ndim() == 2;
  std::size_t n = has_vis ? v_prime.rows() : 0, L = ids.size(),
              d = has_vis ? v_prime.cols() : params.tok_emb.value.cols();
  if (n + L > params.seq_cap)
    throw std::runtime_error("joint_encode: sequence length " +
                             std::to_string(n + L) + " exceeds cap " +
                             std::to_string(params.seq_cap));
  std::size_t S = n + L;
  Tensor x({S, d});
  std::vector<bool> valid(S, true);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k)
      x.at(i, k) = v_prime.at(i, k) + params.seg_emb.value.at(0, k) +
                   params.pos_emb.value.at(i, k);
  for (std::size_t j = 0; j < L; ++j) {
    int id = ids[j];
    if (id < 0 || static_cast<std::size_t>(id) >= params.tok_emb.value.rows())
      throw std::out_of_range("joint_encode: token id out of range");
    if (id == Vocabulary::kPad) valid[n + j] = false;
    for (std::size_t k = 0; k < d; ++k)
      x.at(n + j, k) = params.tok_emb.value.at(id, k) +
                       params.seg_emb.value.at(1, k) +
                       params.pos_emb.value.at(n + j, k);
  }
  cache.n_vis = n;
  cache.ids = ids;
  cache.valid = valid;
  cache.embedded = x;
  cache.states = transformer_forward(x, params.tf, valid, &cache.tf);
  return cache.states;
}

// Returns d(loss)/dV'; scatters embedding gradients.
inline Tensor joint_encode_backward(const Tensor& d_states,
                                    JointEncoderParams& params,
                                    const JointCache& cache) {
  Tensor d_x =
      transformer_backward(d_states, params.tf, cache.valid, cache.tf);
  std::size_t n = cache.n_vis, L = cache.ids.size(), d = d_x.cols();
  Tensor d_v = n > 0 ? Tensor({n, d}) : Tensor();
  Tensor d_tok(params.tok_emb.value.shape());
  Tensor d_pos(params.pos_emb.value.shape());
  Tensor d_seg(params.seg_emb.value.shape());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) {
      double g = d_x.at(i, k);
      d_v.at(i, k) = g;
      d_seg.at(0, k) += g;
      d_pos.at(i, k) += g;
    }
  for (std::size_t j = 0; j < L; ++j) {
    int id = cache.ids[j];
    for (std::size_t k = 0; k < d; ++k) {
      double g = d_x.at(n + j, k);
      d_tok.at(id, k) += g;
      d_seg.at(1, k) += g;
      d_pos.at(n + j, k) += g;
    }
  }
  params.tok_emb.accumulate(d_tok);
  params.pos_emb.accumulate(d_pos);
  params.seg_emb.accumulate(d_seg);
  return d_v;
}

inline void collect_joint_params(JointEncoderParams& p,
                                 std::vector<Parameter*>& out) {
  out.push_back(&p.tok_emb);
  out.push_back(&p.pos_emb);
  out.push_back(&p.seg_emb);
  collect_transformer_params(p.tf, out);
}

// ---- ITM ----------------------------------------------------------------

struct ItmHead {
  Parameter w;  // d
  Parameter b;  // 1
};

inline ItmHead make_itm_head(const std::string& prefix, std::size_t d,
                             RngStream rng) {
  return {make_param(prefix + ".w", {d}, rng, 0.02),
          make_zero_param(prefix + ".b", {1})};
}

struct ItmResult {
  double score = 0.0;
  double loss = 0.0;
};

inline ItmResult itm_loss(const Tensor& cls_vec, bool positive, const ItmHead& h) {
  double logit = h.b.value[0];
  for (std::size_t k = 0; k < cls_vec.size(); ++k)
    logit += cls_vec[k] * h.w.value[k];
  double score = sigmoid(logit);
  double p = positive ? score : 1.0 - score;
  return {score, -std::log(std::max(p, 1e-12))};
}

// d(loss)/d(cls); accumulates head gradients. `weight` scales the loss.
inline Tensor itm_backward(const Tensor& cls_vec, bool positive, ItmHead& h,
                           double score, double weight = 1.0) {
  double dlogit = (score - (positive ? 1.0 : 0.0)) * weight;
  Tensor d_cls(cls_vec.shape());
  Tensor dw(h.w.value.shape());
  for (std::size_t k = 0; k < cls_vec.size(); ++k) {
    d_cls[k] = dlogit * h.w.value[k];
    dw[k] = dlogit * cls_vec[k];
  }
  h.w.accumulate(dw);
  Tensor db({1});
  db[0] = dlogit;
  h.b.accumulate(db);
  return d_cls;
}

// ---- MLM ----------------------------------------------------------------

struct MlmHead {
  Parameter W;  // d x |V|
  Parameter b;  // |V|
};

inline MlmHead make_mlm_head(const std::string& prefix, std::size_t d,
                             std::size_t vocab_size, RngStream rng) {
  return {make_param(prefix + ".W", {d, vocab_size}, rng, 0.02),
          make_zero_param(prefix + ".b", {vocab_size})};
}

struct MlmPlan {
  std::vector<int> input_ids;          // ids after 80/10/10 corruption
  std::vector<std::size_t> positions;  // indices into the caption
  std::vector<int> targets;            // original ids at those positions
};

// BERT-style selection: 15% of non-special tokens; 80% MASK / 10% random /
// 10% unchanged. Deterministic under the stream.
inline MlmPlan mlm_plan(const std::vector<int>& ids, const Vocabulary& vocab,
                        RngStream rng, double select_prob = 0.15) {
  MlmPlan plan;
  plan.input_ids = ids;
  for (std::size_t j = 0; j < ids.size(); ++j) {
    if (ids[j] < Vocabulary::kNumSpecials) continue;
    if (!rng.next_bernoulli(select_prob)) continue;
    plan.positions.push_back(j);
    plan.targets.push_back(ids[j]);
    double roll = rng.next_double();
    if (roll < 0.8) {
      plan.input_ids[j] = Vocabulary::kMask;
    } else if (roll < 0.9) {
      plan.input_ids[j] = static_cast<int>(rng.next_below(vocab.size()));
    }  // else: unchanged
  }
  return plan;
}

struct MlmCache {
  std::vector<Tensor> probs;  // softmax per selected position
};

// Cross-entropy over the selected positions; zero loss when none selected.
// text_states: L x d rows for the caption inside the joint sequence.
inline double mlm_loss(const Tensor& text_states, const MlmPlan& plan,
                       const MlmHead& head, MlmCache* cache = nullptr) {
  if (plan.positions.empty()) return 0.0;
  std::size_t d = text_states.cols(), V = head.b.value.size();
  double total = 0.0;
  for (std::size_t s = 0; s < plan.positions.size(); ++s) {
    std::size_t j = plan.positions[s];
    Tensor logits({1, V});
    for (std::size_t v = 0; v < V; ++v) {
      double z = head.b.value[v];
      for (std::size_t k = 0; k < d; ++k)
        z += text_states.at(j, k) * head.W.value.at(k, v);
      logits.at(0, v) = z;
    }
    Tensor p = softmax_rows(logits);
    total += -std::log(std::max(p.at(0, plan.targets[s]), 1e-300));
    if (cache) cache->probs.push_back(std::move(p));
  }
  return total / static_cast<double>(plan.positions.size());
}

// d(loss)/d(text_states); accumulates head gradients.
inline Tensor mlm_backward(const Tensor& text_states, const MlmPlan& plan,
                           MlmHead& head, const MlmCache& cache,
                           double weight = 1.0) {
  std::size_t L = text_states.rows(), d = text_states.cols(),
              V = head.b.value.size();
  Tensor d_states({L, d});
  if (plan.positions.empty()) return d_states;
  double inv_n = weight / static_cast<double>(plan.positions.size());
  Tensor dW(head.W.value.shape());
  Tensor db(head.b.value.shape());
  for (std::size_t s = 0; s < plan.positions.size(); ++s) {
    std::size_t j = plan.positions[s];
    const Tensor& p = cache.probs[s];
    for (std::size_t v = 0; v < V; ++v) {
      double dlogit = (p.at(0, v) - (static_cast<int>(v) == plan.targets[s]
                                         ? 1.0
                                         : 0.0)) *
                      inv_n;
      if (dlogit == 0.0) continue;
      db[v] += dlogit;
      for (std::size_t k = 0; k < d; ++k) {
        d_states.at(j, k) += dlogit * head.W.value.at(k, v);
        dW.at(k, v) += dlogit * text_states.at(j, k);
      }
    }
  }
  head.W.accumulate(dW);
  head.b.accumulate(db);
  return d_states;
}

// ---- pooling ------------------------------------------------------------

// Mean over the given rows (non-PAD positions chosen by the caller).
inline Tensor pool_rows(const Tensor& x, const std::vector<std::size_t>& rows) {
  if (rows.empty()) throw std::invalid_argument("pool_rows: no rows");
  Tensor out({x.cols()});
  for (std::size_t r : rows)
    for (std::size_t k = 0; k < x.cols(); ++k) out[k] += x.at(r, k);
  for (std::size_t k = 0; k < x.cols(); ++k)
    out[k] /= static_cast<double>(rows.size());
  return out;
}

inline void pool_rows_backward(const Tensor& d_pooled,
                               const std::vector<std::size_t>& rows,
                               Tensor& d_x) {
  double inv = 1.0 / static_cast<double>(rows.size());
  for (std::size_t r : rows)
    for (std::size_t k = 0; k < d_x.cols(); ++k)
      d_x.at(r, k) += d_pooled[k] * inv;
}

// ---- contrastive (symmetric InfoNCE) ------------------------------------

struct ClCache {
  Tensor u, v;          // normalized embeddings, B x d
  std::vector<double> inv_norm_u, inv_norm_v;
  Tensor sim;           // B x B cosine matrix
  Tensor p_row, p_col;  // softmax over rows / columns of sim / tau
};

inline double cl_loss(const Tensor& image_vecs, const Tensor& text_vecs,
                      double temperature, ClCache* cache = nullptr) {
  check_same_shape(image_vecs, text_vecs, "cl_loss");
  std::size_t B = image_vecs.rows(), d = image_vecs.cols();
  if (B < 2) throw std::invalid_argument("cl_loss: batch size must be >= 2");
  Tensor u({B, d}), v({B, d});
  std::vector<double> inu(B), inv(B);
  for (std::size_t i = 0; i < B; ++i) {
    double nu = 0.0, nv = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      nu += image_vecs.at(i, k) * image_vecs.at(i, k);
      nv += text_vecs.at(i, k) * text_vecs.at(i, k);
    }
    inu[i] = 1.0 / std::sqrt(std::max(nu, 1e-24));
    inv[i] = 1.0 / std::sqrt(std::max(nv, 1e-24));
    for (std::size_t k = 0; k < d; ++k) {
      u.at(i, k) = image_vecs.at(i, k) * inu[i];
      v.at(i, k) = text_vecs.at(i, k) * inv[i];
    }
  }
  Tensor sim({B, B});
  sim.mat().noalias() = u.mat() * v.mat().transpose();
  Tensor scaled({B, B});
  for (std::size_t i = 0; i < scaled.size(); ++i)
    scaled[i] = sim[i] / temperature;
  Tensor p_row = softmax_rows(scaled);
  Tensor p_col = transpose(softmax_rows(transpose(scaled)));
  double loss = 0.0;
  for (std::size_t i = 0; i < B; ++i) {
    loss += -std::log(std::max(p_row.at(i, i), 1e-300));
    loss += -std::log(std::max(p_col.at(i, i), 1e-300));
  }
  loss /= 2.0 * static_cast<double>(B);
  if (cache) {
    cache->u = std::move(u);
    cache->v = std::move(v);
    cache->inv_norm_u = std::move(inu);
    cache->inv_norm_v = std::move(inv);
    cache->sim = std::move(sim);
    cache->p_row = std::move(p_row);
    cache->p_col = std::move(p_col);
  }
  return loss;
}

// Gradients w.r.t. the raw (unnormalized) embeddings.
inline std::pair<Tensor, Tensor> cl_backward(const ClCache& cache,
                                             double temperature,
                                             double weight = 1.0) {
  std::size_t B = cache.u.rows(), d = cache.u.cols();
  double c = weight / (2.0 * static_cast<double>(B) * temperature);
  Tensor d_sim({B, B});
  for (std::size_t i = 0; i < B; ++i)
    for (std::size_t j = 0; j < B; ++j) {
      double delta = (i == j) ? 1.0 : 0.0;
      d_sim.at(i, j) =
          c * ((cache.p_row.at(i, j) - delta) + (cache.p_col.at(i, j) - delta));
    }
  Tensor du({B, d}), dv({B, d});
  du.mat().noalias() = d_sim.mat() * cache.v.mat();
  dv.mat().noalias() = d_sim.mat().transpose() * cache.u.mat();
  Tensor dx({B, d}), dy({B, d});
  for (std::size_t i = 0; i < B; ++i) {
    double dot_u = 0.0, dot_v = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      dot_u += du.at(i, k) * cache.u.at(i, k);
      dot_v += dv.at(i, k) * cache.v.at(i, k);
    }
    for (std::size_t k = 0; k < d; ++k) {
      dx.at(i, k) =
          cache.inv_norm_u[i] * (du.at(i, k) - cache.u.at(i, k) * dot_u);
      dy.at(i, k) =
          cache.inv_norm_v[i] * (dv.at(i, k) - cache.v.at(i, k) * dot_v);
    }
  }
  return {std::move(dx), std::move(dy)};
}

}  // namespace gshn
