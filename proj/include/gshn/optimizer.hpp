#pragma once

#include <unordered_map>
#include <vector>

#include "gshn/param.hpp"

namespace gshn {

// One learning-rate/weight-decay group of an SGD-with-momentum optimizer.
struct SgdGroup {
  std::vector<Parameter*> params;
  double lr = 1e-2;
  double weight_decay = 0.0;
};

class SgdOptimizer {
 public:
  explicit SgdOptimizer(std::vector<SgdGroup> groups, double momentum = 0.9)
      : groups_(std::move(groups)), momentum_(momentum) {}

  // v <- mu v + (g + wd w); w <- w - lr v. Frozen parameters are skipped
  // entirely (their velocity also stays put). Gradients are cleared.
  void step() {
    for (auto& g : groups_) {
      for (Parameter* p : g.params) {
        if (!p->frozen) {
          Tensor& v = velocity(p);
          for (std::size_t i = 0; i < p->size(); ++i) {
            double upd = p->grad[i] + g.weight_decay * p->value[i];
            v[i] = momentum_ * v[i] + upd;
            p->value[i] -= g.lr * v[i];
          }
        }
        p->zero_grad();
      }
    }
  }

  void zero_grad() {
    for (auto& g : groups_)
      for (Parameter* p : g.params) p->zero_grad();
  }

 private:
  Tensor& velocity(Parameter* p) {
    auto it = velocity_.find(p);
    if (it == velocity_.end())
      it = velocity_.emplace(p, Tensor(p->value.shape())).first;
    return it->second;
  }

  std::vector<SgdGroup> groups_;
  double momentum_;
  std::unordered_map<Parameter*, Tensor> velocity_;
};

}  // namespace gshn
