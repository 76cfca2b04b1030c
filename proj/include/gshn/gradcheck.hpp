#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gshn/param.hpp"
#include "gshn/rng.hpp"

namespace gshn {

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  bool frozen = false;
  bool frozen_grad_zero = true;  // meaningful only when frozen
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;

  double max_rel_err() const {
    double m = 0.0;
    for (const auto& e : entries)
      if (!e.frozen) m = std::max(m, e.max_rel_err);
    return m;
  }
  bool frozen_ok() const {
    for (const auto& e : entries)
      if (e.frozen && !e.frozen_grad_zero) return false;
    return true;
  }
};

// loss(with_grad): evaluates the scalar objective; when with_grad is true it
// must also accumulate analytic gradients into the parameters. The objective
// must be deterministic (drive all randomness from a replayed RngStream).
//
// Central differences on up to max_coords coordinates per parameter.
// denom_floor guards the relative error against coordinates whose true
// gradient is (near) zero, where central differences only see roundoff.
inline GradCheckReport gradcheck(const std::function<double(bool)>& loss,
                                 const std::vector<Parameter*>& params,
                                 double eps, RngStream rng,
                                 std::size_t max_coords = 24,
                                 double denom_floor = 1e-8) {
  if (eps < 1e-6 || eps > 1e-3)
    throw std::invalid_argument("gradcheck: eps outside [1e-6, 1e-3]");

  for (Parameter* p : params) p->zero_grad();
  double base = loss(true);
  double base2 = loss(false);
  if (std::memcmp(&base, &base2, sizeof(double)) != 0) {
    throw std::runtime_error(
        "gradcheck: objective is not deterministic under the fixed stream");
  }

  GradCheckReport report;
  for (Parameter* p : params) {
    GradCheckEntry e;
    e.name = p->name;
    e.frozen = p->frozen;
    if (p->frozen) {
      for (std::size_t i = 0; i < p->size(); ++i)
        if (p->grad[i] != 0.0) e.frozen_grad_zero = false;
      report.entries.push_back(e);
      continue;
    }
    std::vector<std::size_t> coords(p->size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (coords.size() > max_coords) {
      RngStream r = rng.split(std::hash<std::string>{}(p->name));
      for (std::size_t i = 0; i < max_coords; ++i) {
        std::size_t j = i + r.next_below(coords.size() - i);
        std::swap(coords[i], coords[j]);
      }
      coords.resize(max_coords);
    }
    for (std::size_t idx : coords) {
      double saved = p->value[idx];
      p->value[idx] = saved + eps;
      double fp = loss(false);
      p->value[idx] = saved - eps;
      double fm = loss(false);
      p->value[idx] = saved;
      double numeric = (fp - fm) / (2.0 * eps);
      double analytic = p->grad[idx];
      double denom =
          std::max({std::abs(numeric), std::abs(analytic), denom_floor});
      e.max_rel_err = std::max(e.max_rel_err, std::abs(numeric - analytic) / denom);
      ++e.checked;
    }
    report.entries.push_back(e);
  }
  return report;
}

}  // namespace gshn
