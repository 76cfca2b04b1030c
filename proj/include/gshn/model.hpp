#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "gshn/alignment.hpp"
#include "gshn/fusion.hpp"
#include "gshn/gat.hpp"
#include "gshn/memory.hpp"
#include "gshn/scene_graph.hpp"
#include "gshn/spike.hpp"
#include "gshn/stl.hpp"

namespace gshn {

struct ModelConfig {
  std::size_t d_in = 16;      // scene feature dim
  std::size_t d_hidden = 64;  // d': GAT output / fusion / transformer width
  std::size_t d_mem = 256;    // d'': SNN channels == SMU capacity
  std::size_t gat_layers = 2;
  std::size_t T = 10;
  std::size_t tf_layers = 2;
  std::size_t tf_heads = 4;
  std::size_t tf_ff = 256;
  std::size_t seq_cap = 96;
  double cl_temperature = 0.07;
  bool use_smu = true;
  FusionMode fusion_mode = FusionMode::trainable_r;
  double fixed_r = 1.0;
  StlConfig stl;
  double w_itm = 1.0, w_mlm = 1.0, w_cl = 1.0, w_stl = 1.0;

  void validate() const {
    if (gat_layers < 1) throw std::invalid_argument("ModelConfig: gat_layers");
    if (T < 1) throw std::invalid_argument("ModelConfig: T");
    if (d_hidden % tf_heads != 0)
      throw std::invalid_argument("ModelConfig: d_hidden % tf_heads != 0");
    if (w_itm < 0 || w_mlm < 0 || w_cl < 0 || w_stl < 0)
      throw std::invalid_argument("ModelConfig: negative loss weight");
    stl.validate();
  }
};

struct GshnModel {
  ModelConfig cfg;
  std::vector<GatLayerParams> gat;  // d_in -> d_hidden -> ... -> d_hidden
  SnnParams snn;                    // d_hidden x d_mem
  SemanticMemory smu;               // d_hidden x d_mem
  FusionParams fusion;
  JointEncoderParams enc;
  ItmHead itm;
  MlmHead mlm;
  StlHead stl_head;
};

inline GshnModel make_model(const ModelConfig& cfg, std::size_t vocab_size,
                            RngStream rng) {
  cfg.validate();
  GshnModel m;
  m.cfg = cfg;
  for (std::size_t l = 0; l < cfg.gat_layers; ++l) {
    std::size_t d_in = l == 0 ? cfg.d_in : cfg.d_hidden;
    m.gat.push_back(make_gat_layer("gat." + std::to_string(l), d_in,
                                   cfg.d_hidden, rng.split(10 + l)));
  }
  m.snn = make_snn("snn", cfg.d_hidden, cfg.d_mem, rng.split(1));
  m.smu = smu_init(cfg.d_hidden, cfg.d_mem, rng.split(2));
  m.fusion = make_fusion("fusion", cfg.d_hidden, rng.split(3));
  m.fusion.mode = cfg.fusion_mode;
  m.fusion.fixed_value = cfg.fixed_r;
  m.enc = make_joint_encoder("enc", vocab_size, cfg.d_hidden, cfg.tf_layers,
                             cfg.tf_heads, cfg.tf_ff, cfg.seq_cap,
                             rng.split(4));
  m.itm = make_itm_head("itm", cfg.d_hidden, rng.split(5));
  m.mlm = make_mlm_head("mlm", cfg.d_hidden, vocab_size, rng.split(6));
  m.stl_head = make_stl_head("stl", cfg.d_hidden, cfg.d_mem, rng.split(7));
  return m;
}

// SNN dynamics parameters frozen during the pre-freeze phase (Algorithm 1's
// zeta); the memory M stays trainable throughout.
inline std::vector<Parameter*> zeta_params(GshnModel& m) {
  return {&m.snn.W, &m.snn.tdbn.gamma, &m.snn.tdbn.beta};
}

// Transformer side (blocks, token/position/segment embeddings) trains in
// the slow optimizer group; fast 1e-2 steps on the token embeddings
// destabilize the contrastive geometry.
inline std::vector<Parameter*> text_group(GshnModel& m) {
  std::vector<Parameter*> out;
  collect_transformer_params(m.enc.tf, out);
  out.push_back(&m.enc.tok_emb);
  out.push_back(&m.enc.pos_emb);
  out.push_back(&m.enc.seg_emb);
  return out;
}

// Fast group: GAT, spiking dynamics, memory, fusion gate, and the loss
// heads (small task-specific probes over a slow backbone).
inline std::vector<Parameter*> visual_group(GshnModel& m) {
  std::vector<Parameter*> out;
  for (auto& l : m.gat) {
    out.push_back(&l.W);
    out.push_back(&l.a);
  }
  out.push_back(&m.snn.W);
  out.push_back(&m.snn.tdbn.gamma);
  out.push_back(&m.snn.tdbn.beta);
  out.push_back(&m.smu.M);
  out.push_back(&m.fusion.W_fc);
  out.push_back(&m.itm.w);
  out.push_back(&m.itm.b);
  out.push_back(&m.mlm.W);
  out.push_back(&m.mlm.b);
  out.push_back(&m.stl_head.W);
  out.push_back(&m.stl_head.b);
  return out;
}

inline std::vector<Parameter*> all_params(GshnModel& m) {
  std::vector<Parameter*> out = visual_group(m);
  for (Parameter* p : text_group(m)) out.push_back(p);
  return out;
}

// ---- visual pipeline -----------------------------------------------------

struct VisualCache {
  GatCache gat;
  Tensor f_gat;  // n x d'
  Tensor rates;  // sigmoid(f_gat), n x d'
  SnnCache snn;
  SpikeRecord rec;
  SmuCache smu;
  Tensor e;  // n x d'
  FusionCache fusion;
  Tensor v_prime;  // n x d'
  Tensor u_final;  // n x d'' post-window membrane
};

// Forward through GAT -> rate coding -> SNN -> SMU -> fusion. In hard mode
// rng drives the Bernoulli spike draws; relaxed mode feeds expected rates.
// u_init (channel-mean membrane of the previous stream item, broadcast over
// nodes) implements the within-batch "video frame" carry; it is treated as a
// constant in backward.
inline Tensor visual_forward(GshnModel& m, const SceneGraph& g, SnnMode mode,
                             RngStream rng, VisualCache& cache,
                             const std::vector<double>* u_init_channels =
                                 nullptr) {
  cache.f_gat = gat_forward(g, m.gat, &cache.gat);
  std::size_t n = cache.f_gat.rows(), d = cache.f_gat.cols();
  cache.rates = Tensor({n, d});
  for (std::size_t i = 0; i < cache.rates.size(); ++i)
    cache.rates[i] = sigmoid(cache.f_gat[i]);

  Tensor u0({n, m.cfg.d_mem});
  if (u_init_channels) {
    if (u_init_channels->size() != m.cfg.d_mem)
      throw std::invalid_argument("visual_forward: u_init channel mismatch");
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < m.cfg.d_mem; ++c)
        u0.at(i, c) = (*u_init_channels)[c];
  } else {
    u0.fill(m.snn.lif.v_rest);
  }

  if (mode == SnnMode::hard) {
    Tensor spikes_in = encode_bernoulli(cache.f_gat, m.cfg.T, rng);
    cache.rec = run_snn(spikes_in, m.snn, &cache.snn, &u0, &cache.u_final);
  } else {
    cache.rec = run_snn(cache.rates, m.snn, &cache.snn, &u0, &cache.u_final,
                        m.cfg.T);
  }

  if (m.cfg.use_smu) {
    cache.e = smu_readout(cache.rec.counts, m.smu, &cache.smu);
  } else {
    cache.e = smu_readout_linear(cache.rec.counts, m.smu, m.cfg.T);
  }
  Tensor r;
  if (m.fusion.mode == FusionMode::trainable_r) {
    r = squeeze_ratio(cache.f_gat, m.fusion, &cache.fusion);
  } else if (m.fusion.mode == FusionMode::fixed_r) {
    r = Tensor({1, d});
    r.fill(m.fusion.fixed_value);
  } else {
    r = Tensor({1, d});
  }
  cache.v_prime = fuse(cache.f_gat, cache.e, r, m.fusion.mode);
  return cache.v_prime;
}

// Backward through the visual pipeline; accumulates all parameter gradients.
inline void visual_backward(GshnModel& m, const SceneGraph& g,
                            const Tensor& d_v_prime, VisualCache& cache) {
  FusionGrads fg = fusion_backward(d_v_prime, cache.f_gat, cache.e, m.fusion,
                                   cache.fusion);
  Tensor d_counts;
  if (m.cfg.use_smu) {
    d_counts = smu_backward(fg.d_e_snn, m.smu, cache.smu);
  } else {
    d_counts = smu_linear_backward(fg.d_e_snn, m.smu, cache.rec.counts,
                                   m.cfg.T);
  }
  Tensor d_rate = snn_backward(d_counts, m.snn, cache.snn);
  Tensor d_f = fg.d_f_gat;
  // Rate coding jacobian: p = sigmoid(f) (straight-through in hard mode).
  for (std::size_t i = 0; i < d_f.size(); ++i)
    d_f[i] += d_rate[i] * cache.rates[i] * (1.0 - cache.rates[i]);
  gat_backward(g, m.gat, cache.gat, d_f);
}

// Channel-mean membrane used to seed the next item in a batch stream.
inline std::vector<double> carry_channels(const VisualCache& cache) {
  std::size_t n = cache.u_final.rows(), C = cache.u_final.cols();
  std::vector<double> out(C, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < C; ++c) out[c] += cache.u_final.at(i, c);
  for (std::size_t c = 0; c < C; ++c) out[c] /= static_cast<double>(n);
  return out;
}

// ---- multimodal step -----------------------------------------------------

struct BatchItem {
  const SceneGraph* graph = nullptr;
  std::vector<int> pos_ids;  // matching caption, tokenized
  std::vector<int> neg_ids;  // mismatched caption for ITM
};

struct StepLosses {
  double itm = 0.0, mlm = 0.0, cl = 0.0, stl = 0.0;
  double total = 0.0;
  double mean_firing_rate = 0.0;
};

struct StepConfig {
  SnnMode mode = SnnMode::hard;
  bool with_grad = true;
  bool use_stl = true;  // off during the freeze phase
  bool carry = true;    // membrane stream carry across batch items
};

namespace detail {

struct ItemState {
  VisualCache vis;
  MlmPlan plan;
  JointCache j_pos, j_neg, j_img, j_txt;
  Tensor s_pos, s_neg, s_img, s_txt;  // transformer outputs
  MlmCache mlm;
  double itm_pos_score = 0.0, itm_neg_score = 0.0;
  std::vector<std::size_t> img_rows, txt_rows;
  Tensor img_pooled, txt_pooled;
  StlCache stl;
  Tensor d_pos, d_neg, d_img, d_txt;  // d(loss)/d(states) per pass
};

}  // namespace detail

// One forward (and optional backward) pass over a recalled batch. The rng
// must be a fresh per-(epoch, batch) stream; all stochastic draws split from
// it so the step is a pure function of (model, items, rng, cfg).
inline StepLosses model_step(GshnModel& m, const Vocabulary& vocab,
                             const std::vector<BatchItem>& items,
                             RngStream rng, const StepConfig& sc) {
  std::size_t B = items.size();
  if (B == 0) throw std::invalid_argument("model_step: empty batch");
  std::vector<detail::ItemState> st(B);
  std::size_t d = m.cfg.d_hidden;
  StepLosses out;

  std::vector<double> carry;
  double rate_sum = 0.0;
  std::size_t rate_count = 0;
  for (std::size_t b = 0; b < B; ++b) {
    RngStream item_rng = rng.split(b);
    detail::ItemState& s = st[b];
    Tensor v_prime = visual_forward(m, *items[b].graph, sc.mode,
                                    item_rng.split(0), s.vis,
                                    (sc.carry && b > 0) ? &carry : nullptr);
    if (sc.carry) carry = carry_channels(s.vis);
    for (std::size_t i = 0; i < s.vis.rec.counts.size(); ++i)
      rate_sum += s.vis.rec.counts[i];
    rate_count += s.vis.rec.counts.size();

    // joint passes: positive pair (with MLM corruption), hard-negative pair,
    // and the two unimodal passes feeding CL / STL.
    s.plan = mlm_plan(items[b].pos_ids, vocab, item_rng.split(1));
    s.s_pos = joint_encode(v_prime, s.plan.input_ids, m.enc, s.j_pos);
    s.s_neg = joint_encode(v_prime, items[b].neg_ids, m.enc, s.j_neg);
    s.s_img = joint_encode(v_prime, {}, m.enc, s.j_img);
    Tensor no_vis;  // text-only pass
    s.s_txt = joint_encode(no_vis, items[b].pos_ids, m.enc, s.j_txt);

    std::size_t n = s.j_pos.n_vis;
    Tensor cls({d});
    for (std::size_t k = 0; k < d; ++k) cls[k] = s.s_pos.at(n, k);
    auto ip = itm_loss(cls, true, m.itm);
    Tensor cls_n({d});
    for (std::size_t k = 0; k < d; ++k) cls_n[k] = s.s_neg.at(n, k);
    auto in = itm_loss(cls_n, false, m.itm);
    s.itm_pos_score = ip.score;
    s.itm_neg_score = in.score;
    out.itm += 0.5 * (ip.loss + in.loss);

    Tensor text_states({items[b].pos_ids.size(), d});
    for (std::size_t j = 0; j < text_states.rows(); ++j)
      for (std::size_t k = 0; k < d; ++k)
        text_states.at(j, k) = s.s_pos.at(n + j, k);
    out.mlm += mlm_loss(text_states, s.plan, m.mlm, &s.mlm);

    for (std::size_t i = 0; i < n; ++i) s.img_rows.push_back(i);
    for (std::size_t j = 0; j < items[b].pos_ids.size(); ++j)
      if (s.j_txt.valid[j]) s.txt_rows.push_back(j);
    s.img_pooled = pool_rows(s.s_img, s.img_rows);
    s.txt_pooled = pool_rows(s.s_txt, s.txt_rows);

    if (sc.use_stl) {
      auto res = stl_step(s.txt_pooled, s.vis.rec, m.cfg.stl,
                          item_rng.split(2), m.stl_head, &s.stl);
      out.stl += res.loss;
    }
  }
  double invB = 1.0 / static_cast<double>(B);
  out.itm *= invB;
  out.mlm *= invB;
  out.stl *= invB;
  out.mean_firing_rate =
      rate_sum / (static_cast<double>(rate_count) * m.cfg.T);

  Tensor img_vecs({B, d}), txt_vecs({B, d});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t k = 0; k < d; ++k) {
      img_vecs.at(b, k) = st[b].img_pooled[k];
      txt_vecs.at(b, k) = st[b].txt_pooled[k];
    }
  ClCache cl_cache;
  if (B >= 2) out.cl = cl_loss(img_vecs, txt_vecs, m.cfg.cl_temperature,
                               &cl_cache);
  out.total = m.cfg.w_itm * out.itm + m.cfg.w_mlm * out.mlm +
              m.cfg.w_cl * out.cl + m.cfg.w_stl * out.stl;
  if (!sc.with_grad) return out;

  Tensor d_img_pooled, d_txt_pooled;
  if (B >= 2) {
    auto [di, dt] = cl_backward(cl_cache, m.cfg.cl_temperature, m.cfg.w_cl);
    d_img_pooled = std::move(di);
    d_txt_pooled = std::move(dt);
  }

  for (std::size_t b = 0; b < B; ++b) {
    detail::ItemState& s = st[b];
    std::size_t n = s.j_pos.n_vis;
    double w_item = invB;

    s.d_pos = Tensor(s.s_pos.shape());
    Tensor cls({d});
    for (std::size_t k = 0; k < d; ++k) cls[k] = s.s_pos.at(n, k);
    Tensor d_cls = itm_backward(cls, true, m.itm, s.itm_pos_score,
                                0.5 * m.cfg.w_itm * w_item);
    for (std::size_t k = 0; k < d; ++k) s.d_pos.at(n, k) += d_cls[k];

    Tensor text_states({items[b].pos_ids.size(), d});
    for (std::size_t j = 0; j < text_states.rows(); ++j)
      for (std::size_t k = 0; k < d; ++k)
        text_states.at(j, k) = s.s_pos.at(n + j, k);
    Tensor d_text = mlm_backward(text_states, s.plan, m.mlm, s.mlm,
                                 m.cfg.w_mlm * w_item);
    for (std::size_t j = 0; j < text_states.rows(); ++j)
      for (std::size_t k = 0; k < d; ++k)
        s.d_pos.at(n + j, k) += d_text.at(j, k);

    s.d_neg = Tensor(s.s_neg.shape());
    Tensor cls_n({d});
    for (std::size_t k = 0; k < d; ++k) cls_n[k] = s.s_neg.at(n, k);
    Tensor d_cls_n = itm_backward(cls_n, false, m.itm, s.itm_neg_score,
                                  0.5 * m.cfg.w_itm * w_item);
    for (std::size_t k = 0; k < d; ++k) s.d_neg.at(n, k) += d_cls_n[k];

    s.d_img = Tensor(s.s_img.shape());
    s.d_txt = Tensor(s.s_txt.shape());
    if (B >= 2) {
      Tensor dp({d}), dq({d});
      for (std::size_t k = 0; k < d; ++k) {
        dp[k] = d_img_pooled.at(b, k);
        dq[k] = d_txt_pooled.at(b, k);
      }
      pool_rows_backward(dp, s.img_rows, s.d_img);
      pool_rows_backward(dq, s.txt_rows, s.d_txt);
    }
    if (sc.use_stl) {
      Tensor d_pool = stl_backward(s.txt_pooled, m.cfg.stl, m.stl_head, s.stl,
                                   m.cfg.w_stl * w_item);
      pool_rows_backward(d_pool, s.txt_rows, s.d_txt);
    }

    Tensor d_v = joint_encode_backward(s.d_pos, m.enc, s.j_pos);
    Tensor d_v_neg = joint_encode_backward(s.d_neg, m.enc, s.j_neg);
    Tensor d_v_img = joint_encode_backward(s.d_img, m.enc, s.j_img);
    joint_encode_backward(s.d_txt, m.enc, s.j_txt);
    for (std::size_t i = 0; i < d_v.size(); ++i)
      d_v[i] += d_v_neg[i] + d_v_img[i];
    visual_backward(m, *items[b].graph, d_v, s.vis);
  }
  return out;
}

}  // namespace gshn
