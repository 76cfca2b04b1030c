#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "gshn/param.hpp"
#include "gshn/tensor.hpp"

namespace gshn {

enum class FusionMode { trainable_r, fixed_r, gat_only, snn_only };

inline const char* fusion_mode_name(FusionMode m) {
  switch (m) {
    case FusionMode::trainable_r: return "trainable";
    case FusionMode::fixed_r: return "fixed";
    case FusionMode::gat_only: return "gat_only";
    case FusionMode::snn_only: return "snn_only";
  }
  return "?";
}

struct FusionParams {
  Parameter W_fc;  // d' x d'
  FusionMode mode = FusionMode::trainable_r;
  double fixed_value = 1.0;

  void validate() const {
    if (mode == FusionMode::fixed_r &&
        (fixed_value < 0.0 || fixed_value > 1.0))
      throw std::invalid_argument("FusionParams: fixed r outside [0,1]");
  }
};

inline FusionParams make_fusion(const std::string& prefix, std::size_t d,
                                RngStream rng) {
  FusionParams f;
  f.W_fc = make_param(prefix + ".W_fc", {d, d}, rng,
                      1.0 / std::sqrt(static_cast<double>(d)));
  return f;
}

struct FusionCache {
  Tensor z;  // 1 x d' squeezed mean
  Tensor r;  // 1 x d' gate
};

// Squeeze (node-mean) then excite: r = sigmoid(mean(F) . W_fc), per channel.
inline Tensor squeeze_ratio(const Tensor& f_gat, const FusionParams& params,
                            FusionCache* cache = nullptr) {
  std::size_t n = f_gat.rows(), d = f_gat.cols();
  if (n < 1) throw std::invalid_argument("squeeze_ratio: empty input");
  Tensor z({1, d});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) z.at(0, k) += f_gat.at(i, k);
  for (std::size_t k = 0; k < d; ++k) z.at(0, k) /= static_cast<double>(n);
  Tensor pre = matmul(z, params.W_fc.value);
  Tensor r({1, d});
  for (std::size_t k = 0; k < d; ++k) r.at(0, k) = sigmoid(pre.at(0, k));
  if (cache) {
    cache->z = z;
    cache->r = r;
  }
  return r;
}

// V' = r .* E_SNN + F_GAT (r broadcast over nodes), or the ablation variants.
inline Tensor fuse(const Tensor& f_gat, const Tensor& e_snn, const Tensor& r,
                   FusionMode mode) {
  if (mode == FusionMode::gat_only) return f_gat;
  if (mode == FusionMode::snn_only) return e_snn;
  check_same_shape(f_gat, e_snn, "fuse");
  if (r.size() != f_gat.cols())
    throw std::invalid_argument("fuse: gate length != feature dim");
  Tensor v(f_gat.shape());
  for (std::size_t i = 0; i < f_gat.rows(); ++i)
    for (std::size_t k = 0; k < f_gat.cols(); ++k)
      v.at(i, k) = r[k] * e_snn.at(i, k) + f_gat.at(i, k);
  return v;
}

struct FusionGrads {
  Tensor d_f_gat;
  Tensor d_e_snn;
};

// Backward through fuse + squeeze_ratio. Accumulates W_fc gradient in
// trainable mode.
inline FusionGrads fusion_backward(const Tensor& d_v, const Tensor& f_gat,
                                   const Tensor& e_snn, FusionParams& params,
                                   const FusionCache& cache) {
  std::size_t n = f_gat.rows(), d = f_gat.cols();
  FusionGrads g;
  g.d_f_gat = Tensor({n, d});
  g.d_e_snn = Tensor({n, d});
  switch (params.mode) {
    case FusionMode::gat_only:
      g.d_f_gat = d_v;
      return g;
    case FusionMode::snn_only:
      g.d_e_snn = d_v;
      return g;
    case FusionMode::fixed_r:
      g.d_f_gat = d_v;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < d; ++k)
          g.d_e_snn.at(i, k) = params.fixed_value * d_v.at(i, k);
      return g;
    case FusionMode::trainable_r:
      break;
  }
  g.d_f_gat = d_v;
  Tensor dr({1, d});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) {
      g.d_e_snn.at(i, k) = cache.r[k] * d_v.at(i, k);
      dr.at(0, k) += d_v.at(i, k) * e_snn.at(i, k);
    }
  Tensor d_pre({1, d});
  for (std::size_t k = 0; k < d; ++k)
    d_pre.at(0, k) = dr.at(0, k) * cache.r[k] * (1.0 - cache.r[k]);
  auto [dz, dw] = matmul_vjp(cache.z, params.W_fc.value, d_pre);
  params.W_fc.accumulate(dw);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k)
      g.d_f_gat.at(i, k) += dz.at(0, k) / static_cast<double>(n);
  return g;
}

}  // namespace gshn
