#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "gshn/model.hpp"
#include "gshn/synthetic.hpp"

namespace gshn {

// Pooled unimodal embeddings for every item, refreshed between epochs and
// used as the recall signal for batch construction.
struct RecallIndex {
  std::vector<std::size_t> ids;  // dataset item ids, index-aligned
  Tensor img;                    // N x d'
  Tensor txt;                    // N x d'
};

// Frozen-forward embedding of one item (relaxed mode: deterministic, no rng).
inline void embed_item(GshnModel& m, const SceneRecord& rec,
                       const Vocabulary& vocab, Tensor& img_out,
                       Tensor& txt_out) {
  VisualCache vis;
  Tensor v_prime = visual_forward(m, rec.graph, SnnMode::relaxed,
                                  RngStream(0, 0), vis);
  JointCache j_img, j_txt;
  Tensor s_img = joint_encode(v_prime, {}, m.enc, j_img);
  Tensor no_vis;
  std::vector<int> ids = tokenize(rec.caption, vocab);
  Tensor s_txt = joint_encode(no_vis, ids, m.enc, j_txt);
  std::vector<std::size_t> img_rows(v_prime.rows());
  for (std::size_t i = 0; i < img_rows.size(); ++i) img_rows[i] = i;
  std::vector<std::size_t> txt_rows(ids.size());
  for (std::size_t j = 0; j < txt_rows.size(); ++j) txt_rows[j] = j;
  img_out = pool_rows(s_img, img_rows);
  txt_out = pool_rows(s_txt, txt_rows);
}

inline RecallIndex build_recall_index(
    GshnModel& m, const std::vector<const SceneRecord*>& items,
    const Vocabulary& vocab) {
  if (items.empty())
    throw std::invalid_argument("build_recall_index: empty dataset");
  RecallIndex idx;
  std::size_t d = m.cfg.d_hidden;
  idx.img = Tensor({items.size(), d});
  idx.txt = Tensor({items.size(), d});
  for (std::size_t i = 0; i < items.size(); ++i) {
    idx.ids.push_back(items[i]->id);
    Tensor iv, tv;
    embed_item(m, *items[i], vocab, iv, tv);
    for (std::size_t k = 0; k < d; ++k) {
      idx.img.at(i, k) = iv[k];
      idx.txt.at(i, k) = tv[k];
    }
  }
  return idx;
}

inline double cosine(const Tensor& a, std::size_t i, const Tensor& b,
                     std::size_t j) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t k = 0; k < a.cols(); ++k) {
    dot += a.at(i, k) * b.at(j, k);
    na += a.at(i, k) * a.at(i, k);
    nb += b.at(j, k) * b.at(j, k);
  }
  return dot / std::sqrt(std::max(na * nb, 1e-24));
}

// Image-image cosine of every index row against the anchor row.
inline std::vector<double> cosine_scores(const RecallIndex& idx,
                                         std::size_t anchor_pos) {
  std::vector<double> s(idx.ids.size());
  for (std::size_t i = 0; i < s.size(); ++i)
    s[i] = cosine(idx.img, anchor_pos, idx.img, i);
  return s;
}

// ITM matching score of (anchor image, candidate caption) joint pairs,
// restricted to the given candidate positions (others stay at -inf rank).
inline std::vector<double> itm_scores(
    GshnModel& m, const std::vector<const SceneRecord*>& items,
    const Vocabulary& vocab, std::size_t anchor_pos,
    const std::vector<std::size_t>& candidates) {
  VisualCache vis;
  Tensor v_prime = visual_forward(m, items[anchor_pos]->graph,
                                  SnnMode::relaxed, RngStream(0, 0), vis);
  std::vector<double> s(items.size(),
                        -std::numeric_limits<double>::infinity());
  std::size_t d = m.cfg.d_hidden;
  for (std::size_t c : candidates) {
    JointCache cache;
    std::vector<int> ids = tokenize(items[c]->caption, vocab);
    Tensor states = joint_encode(v_prime, ids, m.enc, cache);
    Tensor cls({d});
    for (std::size_t k = 0; k < d; ++k) cls[k] = states.at(cache.n_vis, k);
    s[c] = itm_loss(cls, true, m.itm).score;
  }
  return s;
}

// Anchor first, then the B-1 highest-scoring candidates in descending score
// order; ties broken by ascending item id. Pure in (index, scores, anchor).
inline std::vector<std::size_t> recall_batch(const RecallIndex& idx,
                                             std::size_t anchor_pos,
                                             std::size_t B,
                                             const std::vector<double>& scores) {
  std::size_t N = idx.ids.size();
  if (B > N)
    throw std::invalid_argument("recall_batch: B exceeds dataset size");
  if (anchor_pos >= N)
    throw std::invalid_argument("recall_batch: anchor out of range");
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < N; ++i)
    if (i != anchor_pos) order.push_back(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     if (scores[a] != scores[b]) return scores[a] > scores[b];
                     return idx.ids[a] < idx.ids[b];
                   });
  std::vector<std::size_t> out = {anchor_pos};
  for (std::size_t i = 0; i + 1 < B; ++i) out.push_back(order[i]);
  return out;
}

inline std::vector<std::size_t> recall_batch(const RecallIndex& idx,
                                             std::size_t anchor_pos,
                                             std::size_t B) {
  return recall_batch(idx, anchor_pos, B, cosine_scores(idx, anchor_pos));
}

// Order a batch's items into the SNN "video frame" stream and attach ITM
// hard negatives (each item gets the next item's caption). The stream order
// is exactly the recall order; model_step applies the membrane carry.
inline std::vector<BatchItem> assemble_stream(
    const std::vector<const SceneRecord*>& items, const Vocabulary& vocab,
    const std::vector<std::size_t>& order) {
  std::vector<BatchItem> batch;
  for (std::size_t pos : order) {
    BatchItem it;
    it.graph = &items[pos]->graph;
    it.pos_ids = tokenize(items[pos]->caption, vocab);
    batch.push_back(std::move(it));
  }
  for (std::size_t b = 0; b < batch.size(); ++b) {
    std::size_t other = order[(b + 1) % order.size()];
    if (items[other]->caption == items[order[b]]->caption && order.size() > 2)
      other = order[(b + 2) % order.size()];
    batch[b].neg_ids = tokenize(items[other]->caption, vocab);
  }
  return batch;
}

}  // namespace gshn
