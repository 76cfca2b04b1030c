#include <doctest.h>

#include <cmath>

#include "gshn/fusion.hpp"
#include "gshn/gradcheck.hpp"
#include "gshn/memory.hpp"

using namespace gshn;

TEST_CASE("smu_init deterministic and column norms near one") {
  SemanticMemory a = smu_init(64, 40, RngStream(5, 9));
  SemanticMemory b = smu_init(64, 40, RngStream(5, 9));
  for (std::size_t i = 0; i < a.M.value.size(); ++i)
    CHECK(a.M.value[i] == b.M.value[i]);

  double mean_norm = 0.0;
  for (std::size_t j = 0; j < 40; ++j) {
    double n2 = 0.0;
    for (std::size_t i = 0; i < 64; ++i)
      n2 += a.M.value.at(i, j) * a.M.value.at(i, j);
    mean_norm += std::sqrt(n2);
  }
  mean_norm /= 40.0;
  CHECK(mean_norm > 0.9);
  CHECK(mean_norm < 1.1);
}

TEST_CASE("smu_readout selection semantics") {
  SemanticMemory mem = smu_init(4, 6, RngStream(8, 0));
  Tensor counts = Tensor::zeros(3, 6);
  counts.at(0, 2) = 1.0;            // one-hot selection
  counts.at(2, 1) = 2.0;            // weighted pair
  counts.at(2, 4) = 1.0;
  Tensor e = smu_readout(counts, mem);
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(e.at(0, k) == mem.M.value.at(k, 2));  // exact column
    CHECK(e.at(1, k) == 0.0);                   // zero-spike row
    double expect = (2.0 * mem.M.value.at(k, 1) + mem.M.value.at(k, 4)) / 3.0;
    CHECK(e.at(2, k) == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("smu_readout naive-loop oracle") {
  RngStream rng(14, 0);
  SemanticMemory mem = smu_init(5, 7, rng.split(0));
  Tensor counts = Tensor::zeros(2, 7);
  RngStream cr = rng.split(1);
  for (std::size_t i = 0; i < counts.size(); ++i)
    counts[i] = static_cast<double>(cr.next_below(4));
  Tensor e = smu_readout(counts, mem);
  for (std::size_t i = 0; i < 2; ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < 7; ++j) total += counts.at(i, j);
    for (std::size_t k = 0; k < 5; ++k) {
      double acc = 0.0;
      for (std::size_t j = 0; j < 7; ++j)
        acc += counts.at(i, j) * mem.M.value.at(k, j);
      double expect = total > 0 ? acc / std::max(total, 1.0) : 0.0;
      CHECK(e.at(i, k) == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("smu count-doubling invariance and hull bound") {
  RngStream rng(15, 0);
  SemanticMemory mem = smu_init(6, 9, rng.split(0));
  Tensor counts = Tensor::zeros(2, 9);
  RngStream cr = rng.split(1);
  for (std::size_t i = 0; i < counts.size(); ++i)
    counts[i] = static_cast<double>(cr.next_below(3));
  Tensor doubled(counts.shape());
  for (std::size_t i = 0; i < counts.size(); ++i) doubled[i] = 2.0 * counts[i];
  Tensor e1 = smu_readout(counts, mem);
  Tensor e2 = smu_readout(doubled, mem);
  for (std::size_t i = 0; i < e1.size(); ++i) CHECK(e1[i] == e2[i]);

  double max_col = 0.0;
  for (std::size_t j = 0; j < 9; ++j) {
    double n2 = 0.0;
    for (std::size_t k = 0; k < 6; ++k)
      n2 += mem.M.value.at(k, j) * mem.M.value.at(k, j);
    max_col = std::max(max_col, std::sqrt(n2));
  }
  for (std::size_t i = 0; i < 2; ++i) {
    double n2 = 0.0;
    for (std::size_t k = 0; k < 6; ++k) n2 += e1.at(i, k) * e1.at(i, k);
    CHECK(std::sqrt(n2) <= max_col + 1e-12);
  }
}

TEST_CASE("smu gradient touches only selected columns") {
  SemanticMemory mem = smu_init(3, 5, RngStream(16, 0));
  Tensor counts = Tensor::zeros(1, 5);
  counts.at(0, 1) = 2.0;
  counts.at(0, 3) = 1.0;
  SmuCache cache;
  smu_readout(counts, mem, &cache);
  Tensor d_e({1, 3});
  d_e.fill(1.0);
  smu_backward(d_e, mem, cache);
  for (std::size_t j = 0; j < 5; ++j) {
    bool selected = (j == 1 || j == 3);
    for (std::size_t k = 0; k < 3; ++k) {
      if (selected) {
        CHECK(mem.M.grad.at(k, j) != 0.0);
      } else {
        CHECK(mem.M.grad.at(k, j) == 0.0);
      }
    }
  }
}

TEST_CASE("smu gradcheck on M (real-valued counts)") {
  SemanticMemory mem = smu_init(3, 4, RngStream(17, 0));
  Tensor counts = Tensor::matrix({{1.5, 0.0, 2.5, 0.5}, {0.0, 3.0, 0.0, 0.0}});
  Tensor wts({2, 3});
  RngStream wr(18, 0);
  for (std::size_t i = 0; i < wts.size(); ++i) wts[i] = wr.next_gaussian();
  auto loss = [&](bool with_grad) {
    SmuCache cache;
    Tensor e = smu_readout(counts, mem, &cache);
    double s = 0.0;
    for (std::size_t i = 0; i < e.size(); ++i) s += wts[i] * e[i];
    if (with_grad) smu_backward(wts, mem, cache);
    return s;
  };
  auto report = gradcheck(loss, {&mem.M}, 1e-5, RngStream(0, 0));
  CHECK(report.max_rel_err() < 1e-6);
}

TEST_CASE("squeeze_ratio zero weights give half gate, range strict") {
  FusionParams f = make_fusion("fusion", 3, RngStream(21, 0));
  f.W_fc.value.fill(0.0);
  Tensor x = Tensor::matrix({{4.0, -2.0, 0.5}, {1.0, 1.0, 1.0}});
  Tensor r = squeeze_ratio(x, f);
  for (std::size_t k = 0; k < 3; ++k) CHECK(r[k] == doctest::Approx(0.5));

  FusionParams f2 = make_fusion("fusion2", 3, RngStream(22, 0));
  Tensor r2 = squeeze_ratio(x, f2);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(r2[k] > 0.0);
    CHECK(r2[k] < 1.0);
  }
}

TEST_CASE("squeeze_ratio hand example sigmoid(1)") {
  FusionParams f = make_fusion("fusion", 2, RngStream(23, 0));
  f.W_fc.value = Tensor::identity(2);
  Tensor x = Tensor::matrix({{2.0, 0.0}, {0.0, 2.0}});
  Tensor r = squeeze_ratio(x, f);
  CHECK(r[0] == doctest::Approx(0.7310585786).epsilon(1e-9));
  CHECK(r[1] == doctest::Approx(0.7310585786).epsilon(1e-9));
}

TEST_CASE("fuse identities") {
  RngStream rng(24, 0);
  Tensor f({3, 4}), e({3, 4});
  for (std::size_t i = 0; i < f.size(); ++i) {
    f[i] = rng.next_gaussian();
    e[i] = rng.next_gaussian();
  }
  Tensor r({1, 4});
  r.fill(0.37);

  Tensor zero_e = Tensor::zeros(3, 4);
  Tensor v0 = fuse(f, zero_e, r, FusionMode::fixed_r);
  for (std::size_t i = 0; i < f.size(); ++i) CHECK(v0[i] == f[i]);

  Tensor rz({1, 4});
  Tensor v_r0 = fuse(f, e, rz, FusionMode::fixed_r);
  Tensor v_gat = fuse(f, e, rz, FusionMode::gat_only);
  for (std::size_t i = 0; i < f.size(); ++i) CHECK(v_r0[i] == v_gat[i]);

  Tensor r1({1, 4});
  r1.fill(1.0);
  Tensor v_r1 = fuse(f, e, r1, FusionMode::fixed_r);
  for (std::size_t i = 0; i < f.size(); ++i)
    CHECK(v_r1[i] == doctest::Approx(e[i] + f[i]).epsilon(1e-15));

  // bounded perturbation by the gate
  Tensor v = fuse(f, e, r, FusionMode::trainable_r);
  double max_e = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i)
    max_e = std::max(max_e, std::abs(e[i]));
  for (std::size_t i = 0; i < v.size(); ++i)
    CHECK(std::abs(v[i] - f[i]) <= 0.37 * max_e + 1e-12);
}

TEST_CASE("fusion gradcheck isolates the excitation path") {
  RngStream rng(25, 0);
  FusionParams params = make_fusion("fusion", 3, rng.split(0));
  Tensor f({4, 3}), e({4, 3});
  RngStream xr = rng.split(1);
  for (std::size_t i = 0; i < f.size(); ++i) {
    f[i] = xr.next_gaussian();
    e[i] = xr.next_gaussian();
  }
  Tensor wts({4, 3});
  for (std::size_t i = 0; i < wts.size(); ++i) wts[i] = xr.next_gaussian();
  auto loss = [&](bool with_grad) {
    FusionCache cache;
    Tensor r = squeeze_ratio(f, params, &cache);
    Tensor v = fuse(f, e, r, FusionMode::trainable_r);
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) s += wts[i] * v[i];
    if (with_grad) fusion_backward(wts, f, e, params, cache);
    return s;
  };
  auto report = gradcheck(loss, {&params.W_fc}, 1e-5, RngStream(0, 0));
  CHECK(report.max_rel_err() < 1e-6);
}
