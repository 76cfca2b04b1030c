#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "gshn/param.hpp"
#include "gshn/spike.hpp"
#include "gshn/tensor.hpp"

namespace gshn {

struct StlHead {
  Parameter W;  // d' x d''
  Parameter b;  // d''
};

inline StlHead make_stl_head(const std::string& prefix, std::size_t d,
                             std::size_t capacity, RngStream rng) {
  return {make_param(prefix + ".W", {d, capacity}, rng,
                     1.0 / std::sqrt(static_cast<double>(d))),
          make_zero_param(prefix + ".b", {capacity})};
}

struct StlConfig {
  double mask_prob = 0.05;
  double gamma = 2.0;
  double alpha = 0.25;

  void validate() const {
    if (!(mask_prob > 0.0 && mask_prob < 1.0))
      throw std::invalid_argument("StlConfig: mask_prob outside (0,1)");
    if (gamma < 0.0) throw std::invalid_argument("StlConfig: gamma < 0");
  }
};

struct StlTarget {
  Tensor y;               // n x d'' binary
  Tensor mask_positions;  // n x d'' booleans as 0/1
};

// Independently masks each (node, channel) position with mask_prob; masked
// counts are zeroed, targets record whether the original count fired.
inline std::pair<SpikeRecord, StlTarget> stl_mask(const SpikeRecord& s,
                                                  double mask_prob,
                                                  RngStream rng) {
  SpikeRecord masked;
  masked.T = s.T;
  masked.counts = s.counts;
  StlTarget target;
  target.y = Tensor(s.counts.shape());
  target.mask_positions = Tensor(s.counts.shape());
  for (std::size_t i = 0; i < s.counts.size(); ++i) {
    if (rng.next_bernoulli(mask_prob)) {
      target.mask_positions[i] = 1.0;
      target.y[i] = s.counts[i] > 0.0 ? 1.0 : 0.0;
      masked.counts[i] = 0.0;
    }
  }
  return {std::move(masked), std::move(target)};
}

inline double focal_term(double p_t, double gamma, double alpha) {
  double lp = std::log(std::max(p_t, 1e-12));
  double mod = gamma == 0.0 ? 1.0 : std::pow(1.0 - p_t, gamma);
  return -alpha * mod * lp;
}

// d(term)/d(logit), where p_t = p for y=1 and 1-p for y=0, p = sigmoid(logit).
inline double focal_term_grad(double p_t, double y, double gamma,
                              double alpha) {
  double lp = std::log(std::max(p_t, 1e-12));
  double one_m = 1.0 - p_t;
  double d_dpt;
  if (gamma == 0.0) {
    d_dpt = -alpha / std::max(p_t, 1e-12);
  } else {
    d_dpt = alpha * gamma * std::pow(std::max(one_m, 0.0), gamma - 1.0) * lp -
            alpha * std::pow(std::max(one_m, 0.0), gamma) /
                std::max(p_t, 1e-12);
  }
  double sign = y > 0.5 ? 1.0 : -1.0;
  double dp_dl = p_t * (1.0 - p_t);  // equals p(1-p) either way
  return d_dpt * sign * dp_dl;
}

// Mean focal loss over masked positions. gamma=0, alpha=1 reduces to BCE.
inline double focal_loss(const std::vector<double>& logits,
                         const std::vector<double>& targets, double gamma,
                         double alpha) {
  if (logits.size() != targets.size())
    throw std::invalid_argument("focal_loss: logits/targets length mismatch");
  if (logits.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    double p = sigmoid(logits[i]);
    double p_t = targets[i] > 0.5 ? p : 1.0 - p;
    total += focal_term(p_t, gamma, alpha);
  }
  return total / static_cast<double>(logits.size());
}

struct StlResult {
  double loss = 0.0;
  std::size_t masked_positions = 0;
  StlTarget target;
};

struct StlCache {
  std::vector<double> channel_logits;  // d''
  StlTarget target;
};

// Predict masked SNN firing labels from pooled text features alone. The
// spike record enters only as constant targets, so no gradient reaches the
// SNN parameters through this objective.
inline StlResult stl_step(const Tensor& pooled_text, const SpikeRecord& s,
                          const StlConfig& cfg, RngStream rng,
                          const StlHead& head, StlCache* cache = nullptr) {
  cfg.validate();
  auto [masked, target] = stl_mask(s, cfg.mask_prob, rng);
  (void)masked;
  std::size_t d = pooled_text.size(), C = head.b.value.size();
  std::vector<double> logits(C);
  for (std::size_t c = 0; c < C; ++c) {
    double z = head.b.value[c];
    for (std::size_t k = 0; k < d; ++k)
      z += pooled_text[k] * head.W.value.at(k, c);
    logits[c] = z;
  }
  StlResult res;
  res.target = target;
  std::vector<double> sel_logits, sel_targets;
  std::size_t n = s.counts.rows();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < C; ++c)
      if (target.mask_positions.at(i, c) == 1.0) {
        sel_logits.push_back(logits[c]);
        sel_targets.push_back(target.y.at(i, c));
      }
  res.masked_positions = sel_logits.size();
  res.loss = focal_loss(sel_logits, sel_targets, cfg.gamma, cfg.alpha);
  if (cache) {
    cache->channel_logits = std::move(logits);
    cache->target = std::move(target);
  }
  return res;
}

// d(loss)/d(pooled_text); accumulates head gradients.
inline Tensor stl_backward(const Tensor& pooled_text, const StlConfig& cfg,
                           StlHead& head, const StlCache& cache,
                           double weight = 1.0) {
  std::size_t d = pooled_text.size(), C = head.b.value.size();
  std::size_t n = cache.target.y.rows();
  Tensor d_pooled({d});
  std::size_t total = 0;
  for (std::size_t i = 0; i < cache.target.mask_positions.size(); ++i)
    if (cache.target.mask_positions[i] == 1.0) ++total;
  if (total == 0) return d_pooled;
  double inv_n = weight / static_cast<double>(total);
  std::vector<double> d_logits(C, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < C; ++c) {
      if (cache.target.mask_positions.at(i, c) != 1.0) continue;
      double p = sigmoid(cache.channel_logits[c]);
      double y = cache.target.y.at(i, c);
      double p_t = y > 0.5 ? p : 1.0 - p;
      d_logits[c] += focal_term_grad(p_t, y, cfg.gamma, cfg.alpha) * inv_n;
    }
  Tensor dW(head.W.value.shape());
  Tensor db(head.b.value.shape());
  for (std::size_t c = 0; c < C; ++c) {
    if (d_logits[c] == 0.0) continue;
    db[c] = d_logits[c];
    for (std::size_t k = 0; k < d; ++k) {
      d_pooled[k] += d_logits[c] * head.W.value.at(k, c);
      dW.at(k, c) = d_logits[c] * pooled_text[k];
    }
  }
  head.W.accumulate(dW);
  head.b.accumulate(db);
  return d_pooled;
}

}  // namespace gshn
