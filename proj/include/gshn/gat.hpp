#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "gshn/param.hpp"
#include "gshn/scene_graph.hpp"
#include "gshn/tensor.hpp"

namespace gshn {

struct GatLayerParams {
  Parameter W;  // d x d'
  Parameter a;  // 1 x 2d'
  double leaky_slope = 0.2;

  std::size_t in_dim() const { return W.value.rows(); }
  std::size_t out_dim() const { return W.value.cols(); }
};

inline GatLayerParams make_gat_layer(const std::string& prefix, std::size_t d,
                                     std::size_t d_out, RngStream rng) {
  GatLayerParams p;
  p.W = make_param(prefix + ".W", {d, d_out}, rng.split(0),
                   1.0 / std::sqrt(static_cast<double>(d)));
  p.a = make_param(prefix + ".a", {1, 2 * d_out}, rng.split(1),
                   1.0 / std::sqrt(static_cast<double>(2 * d_out)));
  return p;
}

inline double elu(double x) { return x > 0 ? x : std::expm1(x); }
inline double elu_grad(double x) { return x > 0 ? 1.0 : std::exp(x); }

inline Tensor project_nodes(const Tensor& x, const Parameter& w) {
  return matmul(x, w.value);
}

// e(f_i, f_j) = LeakyReLU([f_i || f_j] . a^T), one score per edge.
inline std::vector<double> edge_scores(
    const Tensor& f, const std::vector<std::pair<std::size_t, std::size_t>>& edges,
    const Parameter& a, double leaky_slope,
    std::vector<double>* pre_out = nullptr) {
  std::size_t n = f.rows(), dp = f.cols();
  if (a.value.size() != 2 * dp)
    throw std::invalid_argument("edge_scores: attention vector size mismatch");
  std::vector<double> scores(edges.size());
  if (pre_out) pre_out->resize(edges.size());
  for (std::size_t e = 0; e < edges.size(); ++e) {
    auto [i, j] = edges[e];
    if (i >= n || j >= n)
      throw std::out_of_range("edge_scores: edge endpoint out of range");
    double pre = 0.0;
    for (std::size_t k = 0; k < dp; ++k)
      pre += f.at(i, k) * a.value[k] + f.at(j, k) * a.value[dp + k];
    if (pre_out) (*pre_out)[e] = pre;
    scores[e] = pre > 0 ? pre : leaky_slope * pre;
  }
  return scores;
}

// Per-node softmax over incoming-neighborhood edges.
inline std::vector<double> attention_normalize(const std::vector<double>& scores,
                                               const Neighborhoods& nb) {
  std::vector<double> alpha(scores.size(), 0.0);
  for (const auto& group : nb.in_edges) {
    if (group.empty())
      throw std::runtime_error("attention_normalize: node with empty neighborhood");
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t e : group) mx = std::max(mx, scores[e]);
    double denom = 0.0;
    for (std::size_t e : group) {
      alpha[e] = std::exp(scores[e] - mx);
      denom += alpha[e];
    }
    for (std::size_t e : group) alpha[e] /= denom;
  }
  return alpha;
}

// f'_i = ELU(sum_j alpha_ij f_j); pre_out captures the pre-activation.
inline Tensor aggregate(const Tensor& f,
                        const std::vector<std::pair<std::size_t, std::size_t>>& edges,
                        const std::vector<double>& alpha,
                        Tensor* pre_out = nullptr) {
  Tensor h({f.rows(), f.cols()});
  for (std::size_t e = 0; e < edges.size(); ++e) {
    auto [i, j] = edges[e];
    for (std::size_t k = 0; k < f.cols(); ++k)
      h.at(i, k) += alpha[e] * f.at(j, k);
  }
  Tensor out({f.rows(), f.cols()});
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = elu(h[i]);
  if (pre_out) *pre_out = std::move(h);
  return out;
}

struct GatLayerCache {
  Tensor x_in;
  Tensor f;                       // projected features
  std::vector<double> score_pre;  // pre-LeakyReLU per edge
  std::vector<double> alpha;      // attention weight per edge
  Tensor h;                       // pre-ELU aggregate
  Tensor out;
};

struct GatCache {
  std::vector<GatLayerCache> layers;
};

inline Tensor gat_forward(const SceneGraph& g, std::vector<GatLayerParams>& layers,
                          GatCache* cache = nullptr) {
  const Neighborhoods nb = Neighborhoods::build(g);
  Tensor x = g.X;
  if (cache) cache->layers.clear();
  for (auto& layer : layers) {
    if (x.cols() != layer.in_dim())
      throw std::invalid_argument("gat_forward: layer input dim mismatch");
    GatLayerCache c;
    c.x_in = x;
    c.f = project_nodes(x, layer.W);
    std::vector<double> scores =
        edge_scores(c.f, g.edges, layer.a, layer.leaky_slope, &c.score_pre);
    c.alpha = attention_normalize(scores, nb);
    c.out = aggregate(c.f, g.edges, c.alpha, &c.h);
    x = c.out;
    if (cache) cache->layers.push_back(std::move(c));
  }
  return x;
}

// Accumulates parameter gradients; returns d(loss)/dX.
inline Tensor gat_backward(const SceneGraph& g, std::vector<GatLayerParams>& layers,
                           const GatCache& cache, const Tensor& d_out_top) {
  const Neighborhoods nb = Neighborhoods::build(g);
  Tensor d_out = d_out_top;
  for (std::size_t li = layers.size(); li-- > 0;) {
    GatLayerParams& layer = layers[li];
    const GatLayerCache& c = cache.layers[li];
    std::size_t dp = c.f.cols();

    // ELU
    Tensor dh({c.h.rows(), c.h.cols()});
    for (std::size_t i = 0; i < dh.size(); ++i)
      dh[i] = d_out[i] * elu_grad(c.h[i]);

    // aggregate: h_i = sum alpha_ij f_j
    Tensor df({c.f.rows(), c.f.cols()});
    std::vector<double> d_alpha(g.edges.size(), 0.0);
    for (std::size_t e = 0; e < g.edges.size(); ++e) {
      auto [i, j] = g.edges[e];
      double da = 0.0;
      for (std::size_t k = 0; k < dp; ++k) {
        da += dh.at(i, k) * c.f.at(j, k);
        df.at(j, k) += c.alpha[e] * dh.at(i, k);
      }
      d_alpha[e] = da;
    }

    // softmax per neighborhood
    std::vector<double> d_score(g.edges.size(), 0.0);
    for (const auto& group : nb.in_edges) {
      double dot = 0.0;
      for (std::size_t e : group) dot += d_alpha[e] * c.alpha[e];
      for (std::size_t e : group)
        d_score[e] = c.alpha[e] * (d_alpha[e] - dot);
    }

    // LeakyReLU + attention vector
    Tensor da_grad({1, 2 * dp});
    for (std::size_t e = 0; e < g.edges.size(); ++e) {
      auto [i, j] = g.edges[e];
      double dpre =
          d_score[e] * (c.score_pre[e] > 0 ? 1.0 : layer.leaky_slope);
      for (std::size_t k = 0; k < dp; ++k) {
        df.at(i, k) += dpre * layer.a.value[k];
        df.at(j, k) += dpre * layer.a.value[dp + k];
        da_grad[k] += dpre * c.f.at(i, k);
        da_grad[dp + k] += dpre * c.f.at(j, k);
      }
    }
    layer.a.accumulate(da_grad);

    auto [dx, dw] = matmul_vjp(c.x_in, layer.W.value, df);
    layer.W.accumulate(dw);
    d_out = std::move(dx);
  }
  return d_out;
}

}  // namespace gshn
