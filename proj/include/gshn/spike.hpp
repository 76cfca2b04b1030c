#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "gshn/param.hpp"
#include "gshn/rng.hpp"
#include "gshn/tensor.hpp"

namespace gshn {

struct LifConfig {
  double v_threshold = 1.0;  // U_r2
  double v_rest = 0.0;       // U_r1
  double v_reset = 0.0;      // post-spike value, hard mode
  double decay = 0.5;
  enum class Reset { hard, soft } reset_mode = Reset::hard;
  double surrogate_scale = 2.0;

  void validate() const {
    if (!(v_threshold > v_rest))
      throw std::invalid_argument("LifConfig: v_threshold must exceed v_rest");
    if (!(decay > 0.0 && decay <= 1.0))
      throw std::invalid_argument("LifConfig: decay outside (0,1]");
    if (!(surrogate_scale > 0.0))
      throw std::invalid_argument("LifConfig: surrogate_scale must be positive");
  }
};

struct SpikeRecord {
  Tensor counts;  // n x d'' (integers in hard mode, reals in relaxed mode)
  std::size_t T = 0;
  std::optional<Tensor> per_step;  // T x n x d'', binary
};

// Rate coding: firing probability sigmoid(F); independent Bernoulli per step.
// Streams split per (node, channel) so draws are order-independent.
inline Tensor encode_bernoulli(const Tensor& f_gat, std::size_t T,
                               RngStream rng) {
  if (T < 1) throw std::invalid_argument("encode_bernoulli: T must be >= 1");
  std::size_t n = f_gat.rows(), d = f_gat.cols();
  Tensor p({T, n, d});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < d; ++k) {
      RngStream cell = rng.split(i * d + k);
      double prob = sigmoid(f_gat.at(i, k));
      for (std::size_t t = 0; t < T; ++t)
        p.at3(t, i, k) = cell.next_bernoulli(prob) ? 1.0 : 0.0;
    }
  }
  return p;
}

// One membrane update. U_pre = decay*(U - v_rest) + v_rest + input.
inline std::pair<Tensor, Tensor> lif_step(const Tensor& u, const Tensor& input,
                                          const LifConfig& cfg) {
  check_same_shape(u, input, "lif_step");
  Tensor spikes(u.shape());
  Tensor u_next(u.shape());
  for (std::size_t i = 0; i < u.size(); ++i) {
    double u_pre = cfg.decay * (u[i] - cfg.v_rest) + cfg.v_rest + input[i];
    bool fired = u_pre >= cfg.v_threshold;
    spikes[i] = fired ? 1.0 : 0.0;
    if (!fired) {
      u_next[i] = u_pre;
    } else if (cfg.reset_mode == LifConfig::Reset::hard) {
      u_next[i] = cfg.v_reset;
    } else {
      u_next[i] = u_pre - cfg.v_threshold;
    }
  }
  return {std::move(spikes), std::move(u_next)};
}

inline double surrogate_grad(double u_pre, const LifConfig& cfg) {
  double k = cfg.surrogate_scale;
  double th = std::tanh(k * (u_pre - cfg.v_threshold));
  return 0.5 * k * (1.0 - th * th);
}

// Gradient of the spike w.r.t. the pre-reset membrane potential.
inline Tensor surrogate_backward(const Tensor& u_pre, const LifConfig& cfg,
                                 const Tensor& upstream) {
  check_same_shape(u_pre, upstream, "surrogate_backward");
  Tensor out(u_pre.shape());
  for (std::size_t i = 0; i < u_pre.size(); ++i)
    out[i] = surrogate_grad(u_pre[i], cfg) * upstream[i];
  return out;
}

// Smooth spike used by the relaxed forward; its derivative is exactly the
// tanh surrogate above.
inline double soft_spike(double u_pre, const LifConfig& cfg) {
  return 0.5 * (1.0 + std::tanh(cfg.surrogate_scale *
                                (u_pre - cfg.v_threshold)));
}

struct TdbnParams {
  Parameter gamma;  // per channel, init 1
  Parameter beta;   // per channel, init 0
};

inline TdbnParams make_tdbn(const std::string& prefix, std::size_t channels) {
  return {make_const_param(prefix + ".gamma", {channels}, 1.0),
          make_zero_param(prefix + ".beta", {channels})};
}

struct TdbnCache {
  std::vector<double> mean, inv_std;  // per channel
  Tensor xhat;                        // T x n x d''
};

constexpr double kTdbnEps = 1e-5;

// Per-channel normalization over the (T x n) population, scaled by
// gamma * v_threshold and shifted by beta.
inline Tensor tdbn_normalize(const Tensor& pre, const TdbnParams& p,
                             double v_threshold, TdbnCache* cache = nullptr) {
  if (pre.ndim() != 3)
    throw std::invalid_argument("tdbn_normalize: expected T x n x C input");
  std::size_t T = pre.dim(0), n = pre.dim(1), C = pre.dim(2);
  if (T * n < 2)
    throw std::invalid_argument("tdbn_normalize: population must have >= 2 elements");
  std::vector<double> mean(C, 0.0), var(C, 0.0);
  double m = static_cast<double>(T * n);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < C; ++c) mean[c] += pre.at3(t, i, c);
  for (std::size_t c = 0; c < C; ++c) mean[c] /= m;
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < C; ++c) {
        double d = pre.at3(t, i, c) - mean[c];
        var[c] += d * d;
      }
  Tensor out(pre.shape());
  Tensor xhat(pre.shape());
  std::vector<double> inv_std(C);
  for (std::size_t c = 0; c < C; ++c)
    inv_std[c] = 1.0 / std::sqrt(var[c] / m + kTdbnEps);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < C; ++c) {
        double xh = (pre.at3(t, i, c) - mean[c]) * inv_std[c];
        xhat.at3(t, i, c) = xh;
        out.at3(t, i, c) =
            p.gamma.value[c] * v_threshold * xh + p.beta.value[c];
      }
  if (cache) {
    cache->mean = std::move(mean);
    cache->inv_std = std::move(inv_std);
    cache->xhat = std::move(xhat);
  }
  return out;
}

inline Tensor tdbn_backward(const Tensor& d_out, TdbnParams& p,
                            double v_threshold, const TdbnCache& cache) {
  std::size_t T = d_out.dim(0), n = d_out.dim(1), C = d_out.dim(2);
  double m = static_cast<double>(T * n);
  Tensor dgamma({C}), dbeta({C});
  std::vector<double> sum_dxhat(C, 0.0), sum_dxhat_xhat(C, 0.0);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < C; ++c) {
        double g = d_out.at3(t, i, c);
        double xh = cache.xhat.at3(t, i, c);
        dgamma[c] += g * v_threshold * xh;
        dbeta[c] += g;
        double dxh = g * p.gamma.value[c] * v_threshold;
        sum_dxhat[c] += dxh;
        sum_dxhat_xhat[c] += dxh * xh;
      }
  Tensor dx(d_out.shape());
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < C; ++c) {
        double dxh = d_out.at3(t, i, c) * p.gamma.value[c] * v_threshold;
        double xh = cache.xhat.at3(t, i, c);
        dx.at3(t, i, c) =
            cache.inv_std[c] *
            (dxh - sum_dxhat[c] / m - xh * sum_dxhat_xhat[c] / m);
      }
  p.gamma.accumulate(dgamma);
  p.beta.accumulate(dbeta);
  return dx;
}

// Discrete semantic encoder H(.): projected spike input driven through LIF
// over T steps, spikes accumulated into counts.
struct SnnParams {
  Parameter W;  // d' x d''
  TdbnParams tdbn;
  LifConfig lif;
  bool use_tdbn = true;

  std::size_t in_dim() const { return W.value.rows(); }
  std::size_t out_dim() const { return W.value.cols(); }
};

inline SnnParams make_snn(const std::string& prefix, std::size_t d_in,
                          std::size_t d_out, RngStream rng) {
  SnnParams s;
  s.W = make_param(prefix + ".W", {d_in, d_out}, rng.split(0),
                   1.0 / std::sqrt(static_cast<double>(d_in)));
  s.tdbn = make_tdbn(prefix + ".tdbn", d_out);
  return s;
}

enum class SnnMode {
  hard,    // binary Bernoulli input, threshold spikes (training forward)
  relaxed  // expected-rate input, smooth spikes (gradcheck / evaluation)
};

struct SnnCache {
  SnnMode mode = SnnMode::hard;
  Tensor binary_input;  // T x n x d', hard mode only
  Tensor rate_input;  // n x d' : binary-mode marginal rate or relaxed input
  Tensor pre_raw;     // T x n x d'' before tdBN
  TdbnCache tdbn;
  Tensor pre_norm;  // T x n x d''
  Tensor u_pre;     // T x n x d''
  Tensor spikes;    // T x n x d''
};

// inputs: hard mode -> P_binary (T x n x d'); relaxed mode -> rate p (n x d').
// u_init, if given, seeds the membrane (carried stream state); u_final
// receives the post-window membrane.
inline SpikeRecord run_snn(const Tensor& input, SnnParams& params,
                           SnnCache* cache = nullptr,
                           const Tensor* u_init = nullptr,
                           Tensor* u_final = nullptr,
                           std::size_t relaxed_T = 0) {
  params.lif.validate();
  const bool relaxed = input.ndim() == 2;
  std::size_t T = relaxed ? relaxed_T : input.dim(0);
  if (T < 1) throw std::invalid_argument("run_snn: T must be >= 1");
  std::size_t n = relaxed ? input.dim(0) : input.dim(1);
  std::size_t d_in = relaxed ? input.dim(1) : input.dim(2);
  if (d_in != params.in_dim())
    throw std::invalid_argument("run_snn: input dim mismatch");
  std::size_t C = params.out_dim();

  Tensor pre({T, n, C});
  if (relaxed) {
    Tensor step = matmul(input, params.W.value);
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < C; ++c)
          pre.at3(t, i, c) = step.at(i, c);
  } else {
    for (std::size_t t = 0; t < T; ++t) {
      Eigen::Map<const EigenRowMat> pt(input.data() + t * n * d_in,
                                       static_cast<Eigen::Index>(n),
                                       static_cast<Eigen::Index>(d_in));
      Eigen::Map<EigenRowMat> out(pre.data() + t * n * C,
                                  static_cast<Eigen::Index>(n),
                                  static_cast<Eigen::Index>(C));
      out.noalias() = pt * params.W.value.mat();
    }
  }

  TdbnCache tdbn_cache;
  Tensor pre_n = params.use_tdbn
                     ? tdbn_normalize(pre, params.tdbn,
                                      params.lif.v_threshold, &tdbn_cache)
                     : pre;

  Tensor u({n, C});
  if (u_init) {
    check_same_shape(u, *u_init, "run_snn u_init");
    u = *u_init;
  } else {
    u.fill(params.lif.v_rest);
  }

  Tensor u_pre_all({T, n, C}), spikes_all({T, n, C});
  SpikeRecord rec;
  rec.T = T;
  rec.counts = Tensor({n, C});
  const LifConfig& lif = params.lif;
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < C; ++c) {
        double u_pre = lif.decay * (u.at(i, c) - lif.v_rest) + lif.v_rest +
                       pre_n.at3(t, i, c);
        u_pre_all.at3(t, i, c) = u_pre;
        double s;
        if (relaxed) {
          s = soft_spike(u_pre, lif);
          u.at(i, c) = u_pre - lif.v_threshold * s;
        } else {
          bool fired = u_pre >= lif.v_threshold;
          s = fired ? 1.0 : 0.0;
          if (!fired) {
            u.at(i, c) = u_pre;
          } else if (lif.reset_mode == LifConfig::Reset::hard) {
            u.at(i, c) = lif.v_reset;
          } else {
            u.at(i, c) = u_pre - lif.v_threshold;
          }
        }
        spikes_all.at3(t, i, c) = s;
        rec.counts.at(i, c) += s;
      }
    }
  }
  if (u_final) *u_final = u;
  if (cache) {
    cache->mode = relaxed ? SnnMode::relaxed : SnnMode::hard;
    cache->rate_input = relaxed ? input : Tensor();
    if (!relaxed) {
      cache->binary_input = input;
      // Marginal rate of the binary stream; used by the straight-through path.
      Tensor rate({n, d_in});
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t k = 0; k < d_in; ++k)
            rate.at(i, k) += input.at3(t, i, k);
      cache->rate_input = std::move(rate);
    }
    cache->pre_raw = std::move(pre);
    cache->tdbn = std::move(tdbn_cache);
    cache->pre_norm = std::move(pre_n);
    cache->u_pre = std::move(u_pre_all);
    cache->spikes = spikes_all;
  }
  rec.per_step = std::move(spikes_all);
  return rec;
}

// Backward through the LIF chain. d_counts is d(loss)/d(counts). Returns
// d(loss)/d(rate input) of shape n x d'. In hard mode this is the
// straight-through estimate on the per-step input; callers multiply by the
// encoder's own jacobian (e.g. sigmoid') to reach F_GAT.
inline Tensor snn_backward(const Tensor& d_counts, SnnParams& params,
                           const SnnCache& cache,
                           const Tensor* d_u_final = nullptr) {
  std::size_t T = cache.u_pre.dim(0), n = cache.u_pre.dim(1),
              C = cache.u_pre.dim(2);
  const LifConfig& lif = params.lif;
  const bool relaxed = cache.mode == SnnMode::relaxed;

  Tensor d_pre_n({T, n, C});
  Tensor d_u({n, C});
  if (d_u_final) d_u = *d_u_final;
  for (std::size_t t = T; t-- > 0;) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < C; ++c) {
        double u_pre = cache.u_pre.at3(t, i, c);
        double sg = surrogate_grad(u_pre, lif);
        double du_next = d_u.at(i, c);
        double ds = d_counts.at(i, c);
        double du_pre;
        if (relaxed) {
          ds += -lif.v_threshold * du_next;
          du_pre = du_next + ds * sg;
        } else {
          double s = cache.spikes.at3(t, i, c);
          if (lif.reset_mode == LifConfig::Reset::hard) {
            ds += du_next * (lif.v_reset - u_pre);
            du_pre = du_next * (1.0 - s) + ds * sg;
          } else {
            ds += -lif.v_threshold * du_next;
            du_pre = du_next + ds * sg;
          }
        }
        d_pre_n.at3(t, i, c) = du_pre;
        d_u.at(i, c) = lif.decay * du_pre;
      }
    }
  }

  Tensor d_pre = params.use_tdbn
                     ? tdbn_backward(d_pre_n, params.tdbn, lif.v_threshold,
                                     cache.tdbn)
                     : d_pre_n;

  std::size_t d_in = params.in_dim();
  Tensor d_input({n, d_in});
  Tensor dW({d_in, C});
  if (relaxed) {
    Tensor d_step({n, C});
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < C; ++c)
          d_step.at(i, c) += d_pre.at3(t, i, c);
    auto [din, dw] = matmul_vjp(cache.rate_input, params.W.value, d_step);
    d_input = std::move(din);
    dW = std::move(dw);
  } else {
    // dW uses the realized binary inputs; d_input is the straight-through
    // per-step sum (rate path).
    Tensor d_step_sum({n, C});
    for (std::size_t t = 0; t < T; ++t) {
      Eigen::Map<const EigenRowMat> pt(
          cache.binary_input.data() + t * n * d_in,
          static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d_in));
      Eigen::Map<const EigenRowMat> dpt(d_pre.data() + t * n * C,
                                        static_cast<Eigen::Index>(n),
                                        static_cast<Eigen::Index>(C));
      dW.mat().noalias() += pt.transpose() * dpt;
      d_step_sum.mat() += dpt;
    }
    d_input.mat().noalias() =
        d_step_sum.mat() * params.W.value.mat().transpose();
  }
  params.W.accumulate(dW);
  return d_input;
}

}  // namespace gshn
