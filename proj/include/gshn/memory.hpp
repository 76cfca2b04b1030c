#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "gshn/param.hpp"
#include "gshn/spike.hpp"
#include "gshn/tensor.hpp"

namespace gshn {

// Bank of basic semantic features; column j is one d'-dim feature that spike
// counts select and combine.
struct SemanticMemory {
  Parameter M;  // d' x d''

  std::size_t feature_dim() const { return M.value.rows(); }
  std::size_t capacity() const { return M.value.cols(); }
};

inline SemanticMemory smu_init(std::size_t d_feat, std::size_t capacity,
                               RngStream rng, const std::string& name = "smu.M") {
  if (d_feat < 1 || capacity < 1)
    throw std::invalid_argument("smu_init: dimensions must be positive");
  SemanticMemory mem;
  mem.M = make_param(name, {d_feat, capacity}, rng,
                     1.0 / std::sqrt(static_cast<double>(d_feat)));
  return mem;
}

struct SmuCache {
  Tensor s_hat;               // n x d'' count-ratio weights
  std::vector<double> denom;  // per-row active denominator
  std::vector<bool> denom_active;  // rowsum > floor, denominator carries grad
};

constexpr double kSmuCountFloor = 1.0;

// E row i = sum_j S[i,j] M[:,j] / max(rowsum_i, 1). Zero-spike rows are zero.
inline Tensor smu_readout(const Tensor& counts, const SemanticMemory& mem,
                          SmuCache* cache = nullptr) {
  if (counts.cols() != mem.capacity())
    throw std::invalid_argument("smu_readout: count columns != memory capacity");
  std::size_t n = counts.rows(), dpp = counts.cols();
  Tensor s_hat({n, dpp});
  std::vector<double> denom(n);
  std::vector<bool> active(n);
  for (std::size_t i = 0; i < n; ++i) {
    double rowsum = 0.0;
    for (std::size_t j = 0; j < dpp; ++j) rowsum += counts.at(i, j);
    denom[i] = std::max(rowsum, kSmuCountFloor);
    active[i] = rowsum > kSmuCountFloor;
    for (std::size_t j = 0; j < dpp; ++j)
      s_hat.at(i, j) = counts.at(i, j) / denom[i];
  }
  Tensor e({n, mem.feature_dim()});
  e.mat().noalias() = s_hat.mat() * mem.M.value.mat().transpose();
  if (cache) {
    cache->s_hat = std::move(s_hat);
    cache->denom = std::move(denom);
    cache->denom_active = std::move(active);
  }
  return e;
}

// Returns d(loss)/d(counts); accumulates into M.
inline Tensor smu_backward(const Tensor& d_e, SemanticMemory& mem,
                           const SmuCache& cache) {
  std::size_t n = d_e.rows(), dpp = mem.capacity();
  Tensor dM({mem.feature_dim(), dpp});
  dM.mat().noalias() = d_e.mat().transpose() * cache.s_hat.mat();
  mem.M.accumulate(dM);

  Tensor d_s_hat({n, dpp});
  d_s_hat.mat().noalias() = d_e.mat() * mem.M.value.mat();
  Tensor d_counts({n, dpp});
  for (std::size_t i = 0; i < n; ++i) {
    double dot = 0.0;
    if (cache.denom_active[i]) {
      for (std::size_t j = 0; j < dpp; ++j)
        dot += d_s_hat.at(i, j) * cache.s_hat.at(i, j);
    }
    for (std::size_t j = 0; j < dpp; ++j)
      d_counts.at(i, j) = (d_s_hat.at(i, j) - dot) / cache.denom[i];
  }
  return d_counts;
}

// Ablation readout without the select-and-combine normalization: plain firing
// rates through the same memory matrix.
inline Tensor smu_readout_linear(const Tensor& counts, const SemanticMemory& mem,
                                 std::size_t T) {
  Tensor rates({counts.rows(), counts.cols()});
  for (std::size_t i = 0; i < counts.size(); ++i)
    rates[i] = counts[i] / static_cast<double>(T);
  Tensor e({counts.rows(), mem.feature_dim()});
  e.mat().noalias() = rates.mat() * mem.M.value.mat().transpose();
  return e;
}

inline Tensor smu_linear_backward(const Tensor& d_e, SemanticMemory& mem,
                                  const Tensor& counts, std::size_t T) {
  Tensor rates({counts.rows(), counts.cols()});
  for (std::size_t i = 0; i < counts.size(); ++i)
    rates[i] = counts[i] / static_cast<double>(T);
  Tensor dM({mem.feature_dim(), mem.capacity()});
  dM.mat().noalias() = d_e.mat().transpose() * rates.mat();
  mem.M.accumulate(dM);
  Tensor d_counts({counts.rows(), counts.cols()});
  d_counts.mat().noalias() = d_e.mat() * mem.M.value.mat();
  for (std::size_t i = 0; i < d_counts.size(); ++i)
    d_counts[i] /= static_cast<double>(T);
  return d_counts;
}

}  // namespace gshn
