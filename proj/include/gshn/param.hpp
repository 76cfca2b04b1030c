#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "gshn/rng.hpp"
#include "gshn/tensor.hpp"

namespace gshn {

// A trainable tensor plus its gradient accumulator.
struct Parameter {
  Tensor value;
  Tensor grad;
  std::string name;
  bool frozen = false;

  Parameter() = default;
  Parameter(std::string n, Tensor v)
      : value(std::move(v)), grad(value.shape()), name(std::move(n)) {}

  void zero_grad() { grad.fill(0.0); }

  // Frozen parameters ignore accumulation, so their gradient stays exactly 0.
  void accumulate(const Tensor& g) {
    if (frozen) return;
    check_same_shape(grad, g, "Parameter::accumulate");
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += g[i];
  }

  void accumulate_at(std::size_t i, double g) {
    if (frozen) return;
    grad[i] += g;
  }

  std::size_t size() const { return value.size(); }
};

inline Parameter make_param(std::string name, std::vector<std::size_t> shape,
                            RngStream rng, double stddev) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i)
    t[i] = stddev * rng.next_gaussian();
  return Parameter(std::move(name), std::move(t));
}

inline Parameter make_zero_param(std::string name,
                                 std::vector<std::size_t> shape) {
  return Parameter(std::move(name), Tensor(std::move(shape)));
}

inline Parameter make_const_param(std::string name,
                                  std::vector<std::size_t> shape, double v) {
  Tensor t(std::move(shape));
  t.fill(v);
  return Parameter(std::move(name), std::move(t));
}

// Flat, ordered view over a model's parameters. Order is registration order
// and defines checkpoint layout and optimizer iteration order.
class ParamRegistry {
 public:
  void add(Parameter* p) { params_.push_back(p); }

  const std::vector<Parameter*>& params() const { return params_; }

  Parameter* find(const std::string& name) const {
    for (Parameter* p : params_)
      if (p->name == name) return p;
    return nullptr;
  }

  void zero_grad() {
    for (Parameter* p : params_) p->zero_grad();
  }

  std::size_t total_size() const {
    std::size_t n = 0;
    for (Parameter* p : params_) n += p->size();
    return n;
  }

 private:
  std::vector<Parameter*> params_;
};

}  // namespace gshn
