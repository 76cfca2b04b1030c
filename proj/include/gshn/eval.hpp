#pragma once

#include <algorithm>
#include <stdexcept>
#include <vector>

#include "gshn/batching.hpp"

namespace gshn {

struct RetrievalMetrics {
  double r1_i2t = 0.0, r5_i2t = 0.0, r10_i2t = 0.0;
  double r1_t2i = 0.0, r5_t2i = 0.0, r10_t2i = 0.0;
};

namespace detail {

// Rank rows of `keys` against one query row by cosine; rank of the true
// match (same index), ties broken by ascending index.
inline std::size_t match_rank(const Tensor& queries, std::size_t q,
                              const Tensor& keys) {
  std::size_t N = keys.rows();
  double own = cosine(queries, q, keys, q);
  std::size_t rank = 0;
  for (std::size_t j = 0; j < N; ++j) {
    if (j == q) continue;
    double s = cosine(queries, q, keys, j);
    if (s > own || (s == own && j < q)) ++rank;
  }
  return rank;  // 0-based
}

}  // namespace detail

// Paired embeddings: row i of `img` matches row i of `txt`.
inline RetrievalMetrics retrieval_from_embeddings(const Tensor& img,
                                                  const Tensor& txt) {
  std::size_t N = img.rows();
  if (N == 0) throw std::invalid_argument("retrieval: empty split");
  RetrievalMetrics m;
  for (std::size_t i = 0; i < N; ++i) {
    std::size_t r_i2t = detail::match_rank(img, i, txt);
    std::size_t r_t2i = detail::match_rank(txt, i, img);
    if (r_i2t < 1) m.r1_i2t += 1.0;
    if (r_i2t < 5) m.r5_i2t += 1.0;
    if (r_i2t < 10) m.r10_i2t += 1.0;
    if (r_t2i < 1) m.r1_t2i += 1.0;
    if (r_t2i < 5) m.r5_t2i += 1.0;
    if (r_t2i < 10) m.r10_t2i += 1.0;
  }
  double inv = 1.0 / static_cast<double>(N);
  m.r1_i2t *= inv;
  m.r5_i2t *= inv;
  m.r10_i2t *= inv;
  m.r1_t2i *= inv;
  m.r5_t2i *= inv;
  m.r10_t2i *= inv;
  return m;
}

// Deterministic relaxed-mode embedding of a split, then R@K both directions.
inline RetrievalMetrics evaluate_retrieval(
    GshnModel& m, const std::vector<const SceneRecord*>& items,
    const Vocabulary& vocab) {
  RecallIndex idx = build_recall_index(m, items, vocab);
  return retrieval_from_embeddings(idx.img, idx.txt);
}

}  // namespace gshn
